"""Thin command-line client for the airyld service.

Every subcommand builds a request, posts it to the service (an in-process
app instance by default, a remote server with --server), and serializes
the response envelope.  Output bytes are canonical, so identical specs
rerun to identical files.  Exit codes: 0 success, 1 failed verification,
2 invalid spec, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

__all__ = ["main"]


def _canonical(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _load_measure(path: str) -> dict:
    obj = json.loads(Path(path).read_text())
    if "atoms" in obj or "density" in obj or "support" in obj:
        return obj
    if "measure" in obj:
        return obj["measure"]
    raise SystemExit(f"error: {path} does not contain a measure JSON")


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _ints(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=None)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

        from .service import app

    return TestClient(app)


def _tails_csv(result: dict) -> str:
    buf = io.StringIO()
    cols = ["t", "reps", "hits", "p_hat", "wilson_low", "wilson_high",
            "bound", "bound_satisfied"]
    writer = csv.writer(buf)
    writer.writerow(cols)
    for row in result["table"]:
        writer.writerow([row[c] for c in cols])
    return buf.getvalue()


def _trend_csv(result: dict) -> str:
    buf = io.StringIO()
    cols = ["k", "n", "reps", "hits", "p_hat", "log_p_per_k2"]
    writer = csv.writer(buf)
    writer.writerow(cols + ["reference_rate"])
    for row in result["ladder"]:
        writer.writerow([row.get(c) for c in cols] + [result["reference_rate"]])
    return buf.getvalue()


def _gbe_histogram_csv(result: dict, bins: int = 50) -> str:
    import numpy as np

    vals = np.asarray(result.get("lambdas") or result.get("tildes")
                      or result.get("bs"), dtype=float)
    counts, edges = np.histogram(vals, bins=bins)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["bin_lo", "bin_hi", "count"])
    for i, c in enumerate(counts):
        writer.writerow([edges[i], edges[i + 1], int(c)])
    return buf.getvalue()


_CSV_RENDERERS = {
    "tails": _tails_csv,
    "ldp-trend": _trend_csv,
    "sample-gbe": _gbe_histogram_csv,
}


def _emit(envelope: dict, out: str | None, fmt: str) -> None:
    if fmt == "csv":
        renderer = _CSV_RENDERERS.get(envelope["command"])
        if renderer is None:
            raise SystemExit(f"error: no CSV form for {envelope['command']}")
        text = renderer(envelope["result"])
    else:
        text = _canonical(envelope)
    if out:
        Path(out).write_text(text)
    elif fmt == "csv":
        sys.stdout.write(text)


def _summarize(envelope: dict) -> None:
    cmd, res = envelope["command"], envelope["result"]
    if cmd == "sample-sao":
        eigs = res.get("eigenvalues")
        if eigs is not None:
            print(f"{len(eigs)} eigenvalues below lambda_max: "
                  + ", ".join(f"{v:.4f}" for v in eigs))
        else:
            print(f"{len(res['samples'])} replica samples drawn")
    elif cmd == "sample-gbe":
        for block in ("lambdas", "tildes", "bs"):
            if block in res:
                vals = res[block]
                print(f"{block}: {len(vals)} values, top {vals[0]:.6f}")
                break
    elif cmd == "tails":
        for row in res["table"]:
            flag = "ok" if row["bound_satisfied"] else "VIOLATED"
            print(f"t={row['t']}: p_hat={row['p_hat']:.6f} "
                  f"[{row['wilson_low']:.6f}, {row['wilson_high']:.6f}] "
                  f"bound={row['bound']:.6f} {flag}")
    elif cmd == "distance":
        print(f"d_R = {res['value']:.9f} (grid step {res['grid_step']})")
    elif cmd == "rate":
        for row in res["ladder"]:
            if "value" in row:
                print(f"delta={row['delta']}: value={row['value']:.6e} "
                      f"kr_gap={row['kr_gap']:.6f}")
            else:
                print(f"delta={row['delta']}: {row['status']}")
        print(f"extrapolated (heuristic): {res['extrapolated_value']}")
    elif cmd == "ldp-trend":
        for row in res["ladder"]:
            est = row["log_p_per_k2"]
            shown = f"{est:.4f}" if est is not None else \
                f"<= {row['log_p_per_k2_upper']:.4f} (zero hits)"
            print(f"k={row['k']} (n={row['n']}): p_hat={row['p_hat']:.4f} "
                  f"log p / k^2 = {shown}")
        print(f"reference -(beta/2) I_R = {res['reference_rate']:.6f}; {res['note']}")
    elif cmd == "verify":
        for c in res["checks"]:
            print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['detail']}")
        print("all checks passed" if res["passed"] else "FAILURES present")


def _post(args, path: str, payload: dict) -> tuple[int, dict]:
    with _client(args.server) as client:
        resp = client.post(path, json=payload)
        try:
            body = resp.json()
        except Exception:
            body = {"detail": resp.text}
        return resp.status_code, body


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="airyld",
        description="Sampling, distance, and rate-function experiments "
                    "(thin client of the airyld service)",
    )
    parser.add_argument("--server", help="service URL; defaults to in-process app")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", help="output file path")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("sample-sao", help="sample stochastic Airy operator eigenvalues")
    p.add_argument("--beta", type=float, default=2)
    p.add_argument("--lambda-max", type=float, default=6.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-3)
    common(p)

    p = sub.add_parser("sample-gbe", help="sample a beta-ensemble spectrum")
    p.add_argument("--beta", type=int, default=2)
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--top", type=int, default=None)
    p.add_argument("--blocks", default="lambdas,tildes,bs")
    common(p)

    p = sub.add_parser("tails", help="smallest-eigenvalue tail probabilities")
    p.add_argument("--beta", type=float, default=2)
    p.add_argument("--t-ladder", default="1,1.5,2")
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=10.0)
    common(p)

    p = sub.add_parser("distance", help="KR distance between two measure files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--r", type=float, default=10.0)
    p.add_argument("--grid-step", type=float, default=0.01)
    common(p)

    p = sub.add_parser("rate", help="rate values over a delta ladder")
    p.add_argument("--target", default="zero", help="'zero' or a measure file")
    p.add_argument("--delta-ladder", default="0.08,0.04,0.02,0.01")
    p.add_argument("--r", type=float, default=10.0)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--grid", type=int, default=512)
    p.add_argument("--kr-step", type=float, default=0.05)
    common(p)

    p = sub.add_parser("ldp-trend", help="speed-k^2 deviation trend experiment")
    p.add_argument("--beta", type=int, default=2)
    p.add_argument("--r", type=float, default=10.0)
    p.add_argument("--delta", type=float, default=4.5)
    p.add_argument("--k-ladder", default="1,2,3,4")
    p.add_argument("--reps", type=int, default=150)
    p.add_argument("--target", default="zero")
    p.add_argument("--grid-step", type=float, default=0.02)
    common(p)

    p = sub.add_parser("verify", help="run the invariant battery")
    p.add_argument("--full", action="store_true", help="larger sample sizes")
    common(p)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    args = parser.parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service import app

        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    if args.command == "sample-sao":
        payload = {"beta": args.beta, "lambda_max": args.lambda_max,
                   "seed": args.seed, "dt": args.dt, "reps": args.reps,
                   "tol": args.tol, "threads": args.threads}
        path = "/sample-sao"
    elif args.command == "sample-gbe":
        payload = {"beta": args.beta, "n": args.n, "k": args.k,
                   "seed": args.seed, "top": args.top,
                   "blocks": args.blocks.split(",")}
        path = "/sample-gbe"
    elif args.command == "tails":
        payload = {"beta": args.beta, "t_ladder": _floats(args.t_ladder),
                   "reps": args.reps, "seed": args.seed, "dt": args.dt,
                   "horizon": args.horizon, "threads": args.threads}
        path = "/tails"
    elif args.command == "distance":
        payload = {"a": _load_measure(args.a), "b": _load_measure(args.b),
                   "R": args.r, "grid_step": args.grid_step}
        path = "/distance"
    elif args.command == "rate":
        target = None if args.target == "zero" else _load_measure(args.target)
        payload = {"target": target, "delta_ladder": _floats(args.delta_ladder),
                   "R": args.r, "S": args.s, "n_cells": args.grid,
                   "kr_step": args.kr_step}
        path = "/rate"
    elif args.command == "ldp-trend":
        target = None if args.target == "zero" else _load_measure(args.target)
        payload = {"beta": args.beta, "R": args.r, "delta": args.delta,
                   "k_ladder": _ints(args.k_ladder), "reps": args.reps,
                   "seed": args.seed, "target": target,
                   "grid_step": args.grid_step, "threads": args.threads}
        path = "/ldp-trend"
    elif args.command == "verify":
        payload = {"seed": args.seed if args.seed else 20260809,
                   "fast": not args.full}
        path = "/verify"
    else:  # pragma: no cover - argparse guards
        return 2

    status, body = _post(args, path, payload)
    if status in (400, 422):
        print(f"invalid spec: {body.get('detail')}", file=sys.stderr)
        return 2
    if status != 200:
        diag = {"error": body.get("detail", "unknown failure"), "spec": payload,
                "command": args.command}
        if args.out:
            Path(args.out).write_text(_canonical(diag))
        print(f"numerical failure: {diag['error']}", file=sys.stderr)
        return 3

    _emit(body, args.out, args.format)
    _summarize(body)
    if args.command == "verify" and not body["result"]["passed"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
