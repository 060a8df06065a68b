"""Line-protocol predictor server used by the bridge tests.

Computes constant-velocity modes with the harness's own predictor, so the
bridged result must match the direct call bit-exactly. Misbehavior flags
exercise the client's error paths.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from simloop import AgentKind, ConstantVelocityPredictor, build_request
from simloop.scenario import AgentFrame


def handle(line: str, args) -> str:
    try:
        doc = json.loads(line)
        request = build_request(
            scenario_id=doc["scenario_id"],
            agents=[
                (
                    a["id"],
                    AgentKind(a["kind"]),
                    [AgentFrame.from_row(r) for r in a["history"]],
                )
                for a in doc["agents"]
            ],
            map_polylines=[],
            horizon_frames=doc["horizon_frames"],
        )
    except Exception as exc:  # malformed request -> protocol error, keep serving
        return json.dumps({"type": "error", "message": f"bad request: {exc}"})
    if args.error:
        return json.dumps({"type": "error", "message": "synthetic failure"})
    response = ConstantVelocityPredictor().predict(request)
    agents = []
    for i, agent in enumerate(doc["agents"]):
        ms = response.modes[i]
        modes = [
            {
                "probability": ms.probabilities[m],
                "trajectory": [[s.cx, s.cy, s.vx, s.vy] for s in ms.trajectories[m]],
            }
            for m in range(6)
        ]
        agents.append({"id": agent["id"], "modes": modes[: args.modes]})
    return json.dumps({"type": "prediction", "agents": agents})


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--modes", type=int, default=6)
    parser.add_argument("--error", action="store_true")
    parser.add_argument("--hang", action="store_true")
    args = parser.parse_args()
    for line in sys.stdin:
        if not line.strip():
            continue
        if args.hang:
            time.sleep(3600)
        sys.stdout.write(handle(line, args) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
