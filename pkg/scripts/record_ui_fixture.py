"""Record a service conversation for the UI replay-equivalence tests.

Drives the real session service with the click script from
frontend/fixtures/replay_clicks.json, constructing each request exactly the
way the UI does (bias from the slider fraction, labels = predictions with
the scripted toggles applied). The recorded request/response pairs become
the mock transport for the frontend test and the replay source for the
Python acceptance test. Session ids are rewritten to a fixed token so the
fixture is deterministic.

Usage: python3 scripts/record_ui_fixture.py
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from recurdet.image_core import save_png
from recurdet.service import create_app
from recurdet.synth import SceneSpec, generate, textured_constellation_template

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "frontend" / "fixtures"
SESSION_TOKEN = "fixture-session"

SCENE = {
    "height": 300,
    "width": 300,
    "count": 30,
    "jitter": 1,
    "noise_sigma": 0.02,
    "rng_seed": 3,
    "template": "textured_constellation",
}


def scene_image_and_truth(tmp_dir: Path):
    spec = SceneSpec(
        height=SCENE["height"],
        width=SCENE["width"],
        template=textured_constellation_template(),
        count=SCENE["count"],
        jitter=SCENE["jitter"],
        noise_sigma=SCENE["noise_sigma"],
        rng_seed=SCENE["rng_seed"],
    )
    img, truth = generate(spec)
    path = tmp_dir / "scene.png"
    save_png(img, path)
    return path, truth


def main():
    clicks = json.loads((FIXTURES / "replay_clicks.json").read_text())
    tmp_dir = FIXTURES
    image_path, truth = scene_image_and_truth(tmp_dir)

    client = TestClient(create_app())
    steps = []

    def record(method, path, body, resp):
        steps.append(
            {
                "method": method,
                "path": path,
                "body": body,
                "status": resp.status_code,
                "response": resp.json(),
            }
        )
        return resp.json()

    with open(image_path, "rb") as fh:
        resp = client.post(
            "/sessions",
            files={"image": ("scene.png", fh, "image/png")},
            data={"bbox": ",".join(str(v) for v in truth.bbox), "seed": str(clicks["seed"])},
        )
    assert resp.status_code == 201, resp.text
    created = record(
        "POST",
        "/sessions",
        {"bbox": list(truth.bbox), "seed": clicks["seed"]},
        resp,
    )
    sid = created["session_id"]

    bias = created["b_min"] + clicks["bias_fraction"] * (created["b_max"] - created["b_min"])
    resp = client.put(f"/sessions/{sid}/bias", json={"b": bias})
    assert resp.status_code == 200, resp.text
    record("PUT", f"/sessions/{sid}/bias", {"b": bias}, resp)

    for round_script in clicks["rounds"]:
        resp = client.get(f"/sessions/{sid}/batch")
        if resp.status_code == 409:
            record("GET", f"/sessions/{sid}/batch", None, resp)
            break
        batch = record("GET", f"/sessions/{sid}/batch", None, resp)
        labels = {}
        for index, entry in enumerate(batch["entries"]):
            flipped = index in round_script["toggles"]
            predicted = entry["predicted"]
            if flipped:
                labels[str(entry["cluster_id"])] = (
                    "negative" if predicted == "positive" else "positive"
                )
            else:
                labels[str(entry["cluster_id"])] = predicted
        resp = client.post(f"/sessions/{sid}/labels", json={"labels": labels})
        assert resp.status_code == 200, resp.text
        out = record("POST", f"/sessions/{sid}/labels", {"labels": labels}, resp)
        if out["converged"]:
            break

    resp = client.get(f"/sessions/{sid}/result")
    result = record("GET", f"/sessions/{sid}/result", None, resp)
    resp = client.get(f"/sessions/{sid}/log")
    log = resp.json()

    payload = json.dumps(
        {
            "scene": SCENE,
            "bbox": list(truth.bbox),
            "clicks": clicks,
            "steps": steps,
            "final_count": result["count"],
            "log": log,
        },
        indent=1,
    ).replace(sid, SESSION_TOKEN)
    (FIXTURES / "conversation.json").write_text(payload + "\n")
    print(f"recorded {len(steps)} steps, final count {result['count']}")
    print(f"wrote {FIXTURES / 'conversation.json'} and {image_path}")


if __name__ == "__main__":
    main()
