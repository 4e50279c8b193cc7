"""Command-line client.

Every command except ``serve`` and ``synth`` talks HTTP to the service API:
to a running server when ``--server`` is given, otherwise to an in-process
instance of the same app. The sessions root comes from --sessions-root or
the PRUNEFORGE_SESSIONS environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from .service.app import DEFAULT_SESSIONS_ROOT, SESSIONS_ENV_VAR, create_app


class ApiClient:
    """Uniform .get/.post/.put over a remote server or the in-process app."""

    def __init__(self, server: str | None, sessions_root: str | None):
        if server:
            import httpx

            self.client = httpx.Client(base_url=server.rstrip("/"), timeout=None)
        else:
            from fastapi.testclient import TestClient

            self.client = TestClient(create_app(sessions_root))

    def call(self, method: str, path: str, payload=None):
        response = getattr(self.client, method)(path, **({"json": payload} if payload is not None else {}))
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", response.text)
            except Exception:
                detail = response.text
            sys.exit(f"error ({response.status_code}): {detail}")
        return response.json()

    def poll_job(self, path: str, label: str) -> dict:
        last = ""
        while True:
            job = self.call("get", path)
            line = f"\r{label}: {job['status']} {100 * job['progress']:5.1f}%"
            if job.get("total_epochs"):
                line += f"  epoch {job['epoch']}/{job['total_epochs']}"
            if line != last:
                print(line, end="", flush=True)
                last = line
            if job["status"] != "running":
                print()
                if job["status"] == "failed":
                    sys.exit(f"{label} failed: {job['error']}")
                return job
            time.sleep(0.3)


def _dataset_ref(args) -> dict:
    return {
        "manifest": args.dataset,
        "split_index": args.split_index,
        "split_count": args.split_count,
        "train_fraction": args.train_fraction,
        "split_seed": args.split_seed,
    }


def _add_dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="path to a dataset manifest JSON")
    p.add_argument("--split-index", type=int, default=0)
    p.add_argument("--split-count", type=int, default=5)
    p.add_argument("--train-fraction", type=float, default=0.5)
    p.add_argument("--split-seed", type=int, default=0)


def _add_client_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--server", default=None, help="base URL of a running server; default runs in-process")
    p.add_argument("--sessions-root", default=None,
                   help=f"sessions directory for in-process runs (default ${SESSIONS_ENV_VAR} or {DEFAULT_SESSIONS_ROOT})")


def cmd_serve(args) -> None:
    import uvicorn

    app = create_app(args.sessions_root)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")


def cmd_synth(args) -> None:
    from . import dataio as D

    bands, h, w = (int(v) for v in args.resolution.split("x"))
    ds = D.synthetic_dataset(
        class_count=args.classes,
        per_class=args.per_class,
        resolution=(bands, h, w),
        seed=args.seed,
        noise=args.noise,
    )
    manifest = D.write_dataset(args.out, ds)
    print(f"wrote {ds.images.shape[0]} samples ({args.classes} classes) to {manifest}")


def cmd_train(args) -> None:
    api = ApiClient(args.server, args.sessions_root)
    job = api.call("post", "/api/tools/train", {
        "dataset": _dataset_ref(args),
        "out": args.out,
        "preset": args.preset,
        "checkpoint": args.checkpoint,
        "epochs": args.epochs,
        "learning_rate": args.lr,
        "batch_size": args.batch_size,
        "seed": args.seed,
    })
    result = api.poll_job(f"/api/jobs/{job['id']}", "training")["result"]
    print(json.dumps(result, indent=1))


def cmd_score(args) -> None:
    api = ApiClient(args.server, args.sessions_root)
    doc = api.call("post", "/api/tools/score", {
        "checkpoint": args.checkpoint,
        "dataset": _dataset_ref(args),
        "layer": args.layer,
        "criterion": args.criterion,
        "subsample": args.subsample,
    })
    if args.json:
        print(json.dumps(doc, indent=1))
        return
    print(f"layer {doc['layer']} criterion {doc['criterion']}")
    for s in doc["scores"]:
        print(f"  kernel {s['kernel']:4d}  {s['value']:.6g}")


def cmd_eval(args) -> None:
    api = ApiClient(args.server, args.sessions_root)
    doc = api.call("post", "/api/tools/eval", {
        "checkpoint": args.checkpoint,
        "dataset": _dataset_ref(args),
    })
    print(json.dumps(doc, indent=1))


def cmd_flops(args) -> None:
    api = ApiClient(args.server, args.sessions_root)
    payload = {
        "preset": args.preset,
        "checkpoint": args.checkpoint,
        "class_count": args.classes,
        "prune_fraction": args.prune_fraction,
    }
    if args.resolution:
        payload["resolution"] = tuple(int(v) for v in args.resolution.split("x"))
    doc = api.call("post", "/api/tools/flops", payload)
    if args.json:
        print(json.dumps(doc, indent=1))
        return
    rep = doc["flops"]
    print(rep["convention"])
    for i, f in enumerate(rep["conv_layers"], start=1):
        print(f"  conv {i:2d}: {f / 1e9:10.4f} GFLOPs")
    for i, f in enumerate(rep["classifier_layers"], start=1):
        print(f"  fc   {i:2d}: {f / 1e9:10.4f} GFLOPs")
    print(f"  conv total {rep['conv_total'] / 1e9:.4f} GF; with classifier {rep['total'] / 1e9:.4f} GF")
    if "pruned" in doc:
        p = doc["pruned"]
        print(
            f"  after removing {100 * p['fraction']:.0f}% kernels/layer: "
            f"{p['flops']['total'] / 1e9:.4f} GF total, "
            f"GFLOPs reduction {p['gflops_reduction_pct']:.2f}%, "
            f"kernel reduction {p['kernel_reduction_pct']:.2f}%"
        )


def cmd_auto(args) -> None:
    api = ApiClient(args.server, args.sessions_root)
    retrain = {
        "progressive_epochs": args.progressive_epochs,
        "final_epochs": args.final_epochs,
        "final_learning_rate": args.final_lr,
        "complete_learning_rate": args.complete_lr,
        "batch_size": args.batch_size,
        "seed": args.seed,
    }
    session = api.call("post", "/api/sessions", {
        "method": args.method,
        "dataset": _dataset_ref(args),
        "model": {"checkpoint": args.checkpoint},
        "criterion": args.criterion,
        "policy": {"mode": "fixed_fraction", "fraction": args.rho},
        "score_subsample": args.score_subsample,
        "retrain": retrain,
    })
    sid = session["id"]
    layer_count = session["layer_count"]
    print(f"session {sid}: {args.method} over {layer_count} conv layers")
    for l in range(1, layer_count + 1):
        api.call("post", f"/api/sessions/{sid}/layers/{l}/prepare")
        job = api.call("post", f"/api/sessions/{sid}/layers/{l}/commit")
        result = api.poll_job(f"/api/sessions/{sid}/jobs/{job['id']}", f"layer {l}/{layer_count}")
        print(f"  removed {result['result']['removed']} kernels")
    job = api.call("post", f"/api/sessions/{sid}/finalize")
    api.poll_job(f"/api/sessions/{sid}/jobs/{job['id']}", "final retraining")
    report = api.call("get", f"/api/sessions/{sid}/metrics")
    print(json.dumps({k: report[k] for k in (
        "method", "baseline", "final", "kernel_reduction_pct", "gflops_reduction_pct")}, indent=1))
    print(f"full report: sessions root / {sid} / final / report.json")


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(prog="pruneforge",
                                     description="layer-by-layer CNN kernel pruning workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8040)
    p.add_argument("--sessions-root", default=None)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("synth", help="generate a seeded synthetic shape dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--resolution", default="1x16x16", help="CxHxW")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.15)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a model on a dataset split")
    _add_dataset_args(p)
    _add_client_args(p)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--preset", default="tinyvgg", choices=["tinyvgg", "vgg16"])
    p.add_argument("--checkpoint", default=None, help="continue from this checkpoint instead of a preset")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("score", help="kernel relevance scores for one layer")
    _add_dataset_args(p)
    _add_client_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("--criterion", default="objective_loss_delta",
                   choices=["objective_loss_delta", "l1_norm", "apoz"])
    p.add_argument("--subsample", type=int, default=None, help="score on a seeded subsample of the train split")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a test split")
    _add_dataset_args(p)
    _add_client_args(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("flops", help="analytic FLOPs of a preset or checkpoint")
    _add_client_args(p)
    p.add_argument("--preset", default=None, choices=["tinyvgg", "vgg16"])
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--resolution", default="3x200x200", help="CxHxW")
    p.add_argument("--classes", type=int, default=9)
    p.add_argument("--prune-fraction", type=float, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_flops)

    p = sub.add_parser("auto", help="run a fully automated pruning campaign")
    _add_dataset_args(p)
    _add_client_args(p)
    p.add_argument("--checkpoint", required=True, help="trained baseline checkpoint")
    p.add_argument("--method", default="oPPR", choices=["oPPR", "oPCR"])
    p.add_argument("--criterion", default="objective_loss_delta",
                   choices=["objective_loss_delta", "l1_norm", "apoz"])
    p.add_argument("--rho", type=float, default=0.5, help="fraction of kernels removed per layer")
    p.add_argument("--progressive-epochs", type=int, default=40)
    p.add_argument("--final-epochs", type=int, default=50)
    p.add_argument("--final-lr", type=float, default=1e-2)
    p.add_argument("--complete-lr", type=float, default=1e-5,
                   help="learning rate of the per-layer whole-network epoch (complete-retraining methods)")
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--score-subsample", type=int, default=None)
    p.set_defaults(fn=cmd_auto)

    args = parser.parse_args(argv)
    args.fn(args)


if __name__ == "__main__":
    main()
