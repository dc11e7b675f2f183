"""Shared fixtures and the acceptance summary hook.

Generated puzzles are session-scoped: the generator is deterministic, so
every test sees the same fragments without paying the rasterization cost
more than once.
"""
from __future__ import annotations

import pytest

from fresco import GenConfig, generate_puzzle
from fresco.compat import CompatConfig
from fresco.session import SessionConfig
from fresco.solver import SolverConfig


def contact_width_for(erosion_px: int) -> int:
    # Erosion opens a gap of up to ~2*erosion_px between true neighbours,
    # plus a couple of pixels of raster slack; the contact test has to look
    # at least that far or ground-truth seams score zero.
    return max(3, 2 * erosion_px + 4)


def harness_config(erosion_px: int = 2, max_iters: int = 2000) -> SessionConfig:
    return SessionConfig(
        compat=CompatConfig(contact_width_px=contact_width_for(erosion_px)),
        solver=SolverConfig(max_iters=max_iters),
    )


@pytest.fixture(scope="session")
def puzzle4():
    return generate_puzzle(GenConfig(n_fragments=4, erosion_px=2, rng_seed=3))


@pytest.fixture(scope="session")
def puzzle5():
    return generate_puzzle(GenConfig(n_fragments=5, erosion_px=2, rng_seed=7))


@pytest.fixture(scope="session")
def puzzle6():
    return generate_puzzle(GenConfig(n_fragments=6, erosion_px=2, rng_seed=11))


@pytest.fixture(scope="session")
def puzzle6_path(puzzle6, tmp_path_factory):
    out = tmp_path_factory.mktemp("puzzles") / "p6"
    generate_puzzle(GenConfig(n_fragments=6, erosion_px=2, rng_seed=11), out_dir=out)
    return out


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one PASS/FAIL line per acceptance criterion after the run."""
    try:
        from test_acceptance import CRITERIA, DETAILS
    except Exception:
        return
    seen: dict[str, str] = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::" not in nodeid or getattr(rep, "when", "call") != "call":
                continue
            name = nodeid.split("::")[-1].split("[")[0]
            if name in CRITERIA:
                seen[CRITERIA[name]] = "PASS" if outcome == "passed" else "FAIL"
    if not seen:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, criterion in CRITERIA.items():
        if criterion not in seen:
            continue
        detail = DETAILS.get(criterion, "")
        line = f"{seen[criterion]}  {criterion}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
