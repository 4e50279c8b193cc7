"""Record real API responses as fixtures for the studio UI tests.

Drives an sPPR session (8-kernel tinyvgg layer, 3 classes) through the
in-process service and captures the exact JSON the UI consumes: session
state, projection payload with hints, decisions round trip, commit job
states, and the 40-epoch loss trace on the committed layer record.
"""

import json
import sys
import time
from pathlib import Path

from fastapi.testclient import TestClient

from pruneforge import dataio as D
from pruneforge import model as M
from pruneforge import retraining as R
from pruneforge.service.app import create_app

OUT = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"


def record(tmp: Path) -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    ds = D.synthetic_dataset(class_count=3, per_class=20, resolution=(1, 16, 16), seed=6)
    manifest = D.write_dataset(tmp / "data", ds)
    plan = D.make_splits(ds, split_count=1, train_fraction=0.5, seed=6)
    tr, _ = plan.train_test(0)
    record_stats = D.normalization_stats(ds.images[tr])
    model = M.build_preset("tinyvgg", (1, 16, 16), 3, seed=2)
    model, _ = R.train_cross_entropy(
        model, D.apply_normalization(ds.images[tr], record_stats), ds.labels[tr],
        epochs=8, learning_rate=0.05, batch_size=8, seed=2,
    )
    ckpt = tmp / "base.cnnp"
    M.save_checkpoint(model, ckpt)

    client = TestClient(create_app(str(tmp / "sessions")))
    created = client.post("/api/sessions", json={
        "method": "sPPR",
        "id": "fixture",
        "dataset": {"manifest": str(manifest), "split_index": 0, "split_count": 1,
                    "train_fraction": 0.5, "split_seed": 6},
        "model": {"checkpoint": str(ckpt)},
        "projection_iterations": 300,
        "retrain": {"progressive_epochs": 40, "final_epochs": 2,
                    "final_learning_rate": 1e-2, "batch_size": 8, "seed": 3},
    })
    assert created.status_code == 200, created.text
    sid = created.json()["id"]

    def save(name, doc):
        (OUT / name).write_text(json.dumps(doc, indent=1, sort_keys=True))
        print(f"wrote {name}")

    save("session_created.json", created.json())
    projection = client.post(f"/api/sessions/{sid}/layers/1/prepare").json()
    save("projection_layer1.json", projection)
    save("session_awaiting.json", client.get(f"/api/sessions/{sid}").json())
    save("weight_projection_layer1.json",
         client.get(f"/api/sessions/{sid}/layers/1/weight-projection").json())

    put = client.put(f"/api/sessions/{sid}/layers/1/decisions", json={"remove": [1, 4]})
    save("decisions_put_response.json", put.json())
    save("decisions_get_after_put.json",
         client.get(f"/api/sessions/{sid}/layers/1/decisions").json())
    rejected = client.put(f"/api/sessions/{sid}/layers/1/decisions",
                          json={"remove": list(range(8))})
    save("decisions_full_layer_rejected.json",
         {"status_code": rejected.status_code, "body": rejected.json()})

    committed = client.post(f"/api/sessions/{sid}/layers/1/commit")
    job_id = committed.json()["id"]
    snapshots = [committed.json()]
    while True:
        state = client.get(f"/api/sessions/{sid}/jobs/{job_id}").json()
        if not snapshots or state != snapshots[-1]:
            snapshots.append(state)
        if state["status"] != "running":
            break
        time.sleep(0.2)
    save("commit_job_states.json", snapshots)
    save("layer1_record.json", client.get(f"/api/sessions/{sid}/layers/1/record").json())
    save("session_after_commit.json", client.get(f"/api/sessions/{sid}").json())


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        record(Path(tmp))
    print("fixtures recorded to", OUT, file=sys.stderr)
