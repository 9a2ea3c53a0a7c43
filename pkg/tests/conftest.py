import numpy as np
import pytest

from gripplus.scenes import AgentType, SceneClip, SynthSpec, synth_scenes
from gripplus.tensor import Tensor, tsum, mul


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def weighted_sum_loss(out: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar probe sum(out * weights) used by gradient checks."""
    return tsum(mul(out, weights))


def make_clip(positions, mask=None, t_h=3, types=None, scene_id="s0", frame_rate=2.0):
    positions = np.asarray(positions, dtype=np.float64)
    n, total, _ = positions.shape
    mask = np.ones((n, total), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    types = types or [AgentType.SMALL_VEHICLE] * n
    return SceneClip(agent_ids=list(range(n)), agent_types=list(types), positions=positions, mask=mask,
                     t_h=t_h, frame_rate=frame_rate, origin_frame=0, scene_id=scene_id,
                     sequence_id=scene_id)


def random_clips(num, agents=(2, 4), t_h=4, t_f=3, families=("cv", "turn", "lane_change"), seed=0):
    spec = SynthSpec(num_scenes=num, agents_min=agents[0], agents_max=agents[1], families=families,
                     t_h=t_h, t_f=t_f)
    return synth_scenes(spec, np.random.default_rng(seed))


# Acceptance outcomes, printed once at the end of the session so that the
# PASS/FAIL lines survive pytest's output capture.
ACCEPTANCE: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> bool:
    line = f"{'PASS' if passed else 'FAIL'} [{criterion}] {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
