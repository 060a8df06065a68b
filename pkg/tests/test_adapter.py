"""Bridge conformance against the reference adapter (secondary component).

These tests need the adapter built (`npm run build` in adapter/); they skip
cleanly when the build output is missing so the primary suite stands alone.
"""

from __future__ import annotations

import json
import re
import shutil
import subprocess
import time
from pathlib import Path

import pytest

from simloop import (
    BridgePredictor,
    RolloutConfig,
    StdioTransport,
    TcpTransport,
    run_ensemble,
)
from simloop.cli import main
from simloop.engine import rollouts_to_dict
from simloop.predictor import validate_response
from simloop.engine import _plan_request, initial_state
from simloop import save_scenario

from conftest import make_scenario, straight_agent

ADAPTER_MAIN = Path(__file__).parent.parent / "adapter" / "dist" / "main.js"

pytestmark = pytest.mark.skipif(
    not ADAPTER_MAIN.exists() or shutil.which("node") is None,
    reason="adapter not built (run `npm run build` in adapter/)",
)


def adapter_argv(*extra: str) -> list[str]:
    return ["node", str(ADAPTER_MAIN), *extra]


def demo_scenario():
    return make_scenario(
        straight_agent("ego", 0.0, 0.0, 6.0, 0.0, with_future=True),
        straight_agent("oncoming", 20.0, 0.0, -6.0, 0.0, with_future=True),
        scenario_id="adapter_demo",
    )


def run_bridged_ensemble(seed: int):
    scenario = demo_scenario()
    config = RolloutConfig(branching=(1, 2, 4, 4), rollouts_required=32)
    predictor = BridgePredictor(
        StdioTransport(adapter_argv("--stdio", "--seed", str(seed)), timeout=60.0),
        name="adapter",
    )
    try:
        rollouts = run_ensemble(scenario, [predictor], config)
    finally:
        predictor.close()
    return scenario, rollouts


def test_adapter_responses_pass_mode_set_validation():
    scenario = demo_scenario()
    config = RolloutConfig()
    predictor = BridgePredictor(
        StdioTransport(adapter_argv("--stdio", "--seed", "3"), timeout=60.0)
    )
    try:
        request = _plan_request(initial_state(scenario), config, 0)
        response = predictor.predict(request)  # decode already validates
        validate_response(request, response)
        for ms in response.modes:
            assert ms.horizon == 20
            assert abs(sum(ms.probabilities) - 1.0) <= 1e-6
    finally:
        predictor.close()


def test_full_32_rollout_run_and_seed_reproducibility():
    scenario, first = run_bridged_ensemble(seed=5)
    assert len(first) == 32
    assert all(r.n_frames == 80 for r in first)
    _, second = run_bridged_ensemble(seed=5)
    a = json.dumps(rollouts_to_dict(scenario.scenario_id, first), sort_keys=True)
    b = json.dumps(rollouts_to_dict(scenario.scenario_id, second), sort_keys=True)
    assert a == b
    _, other = run_bridged_ensemble(seed=6)
    c = json.dumps(rollouts_to_dict(scenario.scenario_id, other), sort_keys=True)
    assert a != c
    print("\nACCEPTANCE bridge-conformance (32 rollouts, bit-identical reruns): PASS")


def test_cli_bridge_over_tcp(tmp_path):
    scenario_path = tmp_path / "scenario.json"
    save_scenario(demo_scenario(), scenario_path)
    proc = subprocess.Popen(
        adapter_argv("--listen", "127.0.0.1:0", "--seed", "9"),
        stdout=subprocess.DEVNULL,
        stderr=subprocess.PIPE,
    )
    try:
        assert proc.stderr is not None
        deadline = time.monotonic() + 15
        banner = b""
        while time.monotonic() < deadline:
            banner += proc.stderr.read1(4096)
            match = re.search(rb"listening on [^:]+:(\d+)", banner)
            if match:
                port = int(match.group(1))
                break
        else:
            pytest.fail(f"adapter never announced a port: {banner!r}")
        out = tmp_path / "out"
        code = main([
            "simulate", "--scenario", str(scenario_path),
            "--predictor", "bridge", "--endpoint", f"127.0.0.1:{port}",
            "--rollouts", "32", "--branching", "1,2,4,4", "--out", str(out),
        ])
        assert code == 0
        doc = json.loads((out / "adapter_demo.rollouts.json").read_text())
        assert len(doc["rollouts"]) == 32
    finally:
        proc.kill()
        proc.wait()
