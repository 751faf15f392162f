import json
import time
from pathlib import Path

import pytest

from laughfuse.cli import main
from laughfuse.vision.cascade import parse_cascade_xml, toy_cascade_path

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def toy_cascade():
    return parse_cascade_xml(toy_cascade_path())


@pytest.fixture(scope="session")
def two_stage_cascade():
    return parse_cascade_xml(FIXTURES / "two_stage.xml")


def run_pipeline(root, clips=40, seed=42, config=None):
    """synth -> extract -> train -> eval through the CLI; returns paths and timing."""
    root = Path(root)
    cfg_args = ["--config", str(config)] if config else []
    t0 = time.perf_counter()
    codes = [
        main(["synth", "--out", str(root / "corpus"), "--clips", str(clips), "--seed", str(seed)]),
        main(["extract", "--manifest", str(root / "corpus" / "manifest.json"), "--out", str(root / "feats"), *cfg_args]),
        main(["train", "--dataset", str(root / "feats" / "fused.jsonl"), "--out", str(root / "model.json"), *cfg_args]),
        main(
            [
                "eval",
                "--dataset", str(root / "feats" / "fused.jsonl"),
                "--model", str(root / "model.json"),
                "--out", str(root / "report.json"),
            ]
        ),
    ]
    elapsed = time.perf_counter() - t0
    return {
        "codes": codes,
        "elapsed": elapsed,
        "root": root,
        "dataset": root / "feats" / "fused.jsonl",
        "model": root / "model.json",
        "report": json.loads((root / "report.json").read_text()) if codes[-1] == 0 else None,
    }


@pytest.fixture(scope="session")
def e2e_run(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("e2e"))


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
