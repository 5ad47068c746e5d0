import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dcflowgen.degseq import RackLayout
from dcflowgen.mapper import MappingResult
from dcflowgen.payload import ack_flow_size
from dcflowgen.tm import TrafficProfile
from dcflowgen.validator import (
    COMPARISONS,
    L2Model,
    ValidationReport,
    flagged_mismatch,
    generated_distributions,
    l2_flow_sizes,
    synthesize_l2_tm,
    validate,
)

LAYOUT = RackLayout.uniform(3, 4)
MODEL = L2Model()


def random_schedule(seed: int, n: int = 400) -> MappingResult:
    rng = np.random.default_rng(seed)
    src = rng.integers(0, LAYOUT.n, n)
    dst = (src + rng.integers(1, LAYOUT.n, n)) % LAYOUT.n
    return MappingResult(np.sort(rng.random(n) * 10), src, dst,
                         np.round(np.exp(rng.uniform(0, 16, n))))


def test_l2_sizes_examples():
    data, ack = l2_flow_sizes(np.array([0.0, 1448.0]))
    assert data.tolist() == [272.0, 1786.0]
    assert ack.tolist() == [0.0, 66.0]


def test_l2_model_validation():
    with pytest.raises(ValueError):
        L2Model(handshake_overhead=-1)
    data, ack = l2_flow_sizes(np.array([1448.0]), L2Model(ack_handshake_overhead=10.0))
    assert ack.tolist() == [76.0]


# payloads are whole bytes; subnormal floats would underflow p / mss
@given(st.integers(0, 10**9), st.integers(0, 10**9))
def test_l2_size_strictly_increasing(a, b):
    if a == b:
        return
    lo, hi = sorted((a, b))
    d, _ = l2_flow_sizes(np.array([lo, hi]))
    assert d[0] < d[1]


def test_synthesized_single_flow():
    p = 1e5
    s = MappingResult(np.array([1.0]), np.array([2]), np.array([7]), np.array([p]))
    tm = synthesize_l2_tm(s, MODEL, LAYOUT)
    assert tm.get(2, 7) == 272 + p + np.ceil(p / 1448) * 66
    assert tm.get(7, 2) == ack_flow_size(p)
    assert tm.nnz == 2


def test_empty_epoch_gives_empty_tm():
    s = MappingResult(np.empty(0), np.empty(0, int), np.empty(0, int), np.empty(0))
    assert synthesize_l2_tm(s, MODEL, LAYOUT).nnz == 0


def test_byte_conservation_and_ack_back_channel():
    s = random_schedule(0)
    tm = synthesize_l2_tm(s, MODEL, LAYOUT)
    data, ack = l2_flow_sizes(s.sizes, MODEL)
    assert tm.total == pytest.approx(data.sum() + ack.sum(), rel=1e-12)
    for i, j, p in zip(s.src.tolist(), s.dst.tolist(), s.sizes.tolist()):
        assert tm.get(j, i) >= ack_flow_size(p)


def test_self_consistency_fixed_point():
    epochs = [random_schedule(1), random_schedule(2)]
    gen = generated_distributions(epochs, LAYOUT, MODEL)
    own = TrafficProfile(gen["n_intra"], gen["n_inter"], gen["b_intra"], gen["b_inter"],
                         gen["s_flow"], gen["iat"])
    rep = validate(epochs, own, LAYOUT, MODEL)
    assert set(rep.comparisons) == set(COMPARISONS)
    for name in COMPARISONS:
        assert rep.ks(name) == 0.0
    assert not flagged_mismatch(rep)


def test_report_json_round_trip_and_determinism():
    epochs = [random_schedule(3)]
    gen = generated_distributions(epochs, LAYOUT, MODEL)
    other = TrafficProfile(gen["n_intra"], gen["n_inter"], gen["b_intra"].scaled(2.0),
                           gen["b_inter"], gen["s_flow"], gen["iat"].scaled(3.0))
    a = validate(epochs, other, LAYOUT, MODEL)
    b = validate(epochs, other, LAYOUT, MODEL)
    assert a.to_json() == b.to_json()
    back = ValidationReport.from_dict(json.loads(a.to_json()))
    assert back.ks("b_intra") == a.ks("b_intra") > 0
    assert back.flows == 400 and back.epochs == 1
    assert flagged_mismatch(a)


def test_validate_needs_epochs():
    with pytest.raises(ValueError):
        validate([], None, LAYOUT)
