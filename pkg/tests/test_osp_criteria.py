import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jacket_shm.modal import ModalData
from jacket_shm.osp_criteria import (
    CRITERIA, CriterionContext, all_subsets, efi_projection_diag, efi_value, evaluate, evp_value,
    get_criterion, ie_value, ke_value, write_batch_csv,
)
from jacket_shm.structural_model import JacketModel


@pytest.fixture(scope="module")
def subsets():
    return all_subsets(12)


@pytest.fixture(scope="module")
def table(ctx, subsets):
    return {c: np.array([evaluate(c, s, ctx) for s in subsets]) for c in CRITERIA}


def _superset_pairs(subsets):
    masks = (subsets * (1 << np.arange(12))).sum(axis=1)
    pos = {int(m): i for i, m in enumerate(masks)}
    for i, m in enumerate(masks):
        for b in range(12):
            if not m >> b & 1:
                yield i, pos[int(m | 1 << b)]


def test_all_subsets_count(subsets):
    assert subsets.shape == (4095, 12)
    assert len({tuple(r) for r in subsets}) == 4095


def test_ke_sums_to_omega_squared(ctx):
    total = ctx.ke_dof.sum(axis=0)
    np.testing.assert_allclose(total, ctx.modal.omega**2, rtol=1e-6)


def test_projection_trace(ctx):
    assert efi_projection_diag(ctx).sum() == pytest.approx(6.0, abs=1e-8)


def test_efi_single_node_singular(ctx):
    sel = np.zeros(12, bool)
    sel[3] = True
    assert efi_value(sel, ctx) == -np.inf


@pytest.mark.parametrize("name", CRITERIA)
def test_empty_selection_rejected(ctx, name):
    with pytest.raises(ValueError):
        evaluate(name, np.zeros(12, bool), ctx)


@pytest.mark.parametrize("name", ["efi", "ke", "evp"])
def test_monotone_under_growth(table, subsets, name):
    J = table[name]
    for a, b in _superset_pairs(subsets):
        if np.isfinite(J[a]):
            assert J[b] >= J[a] - 1e-12 * abs(J[a])


def test_ke_node_totals_nonnegative(ctx):
    assert np.all(ctx.ke_node.sum(axis=1) >= 0)


def test_ie_bounds(table, subsets):
    J = table["ie"]
    assert np.all(J <= 0)
    single = subsets.sum(axis=1) == 1
    np.testing.assert_array_equal(J[single], 0.0)
    assert np.all(J[~single] < 0)


def test_ie_equal_energy_pair(ctx):
    # candidates 0 and 2 are mirror images and carry equal kinetic energy
    assert ctx.ke_node[0].sum() == pytest.approx(ctx.ke_node[2].sum(), rel=1e-9)
    sel = np.zeros(12, bool)
    sel[[0, 2]] = True
    assert ie_value(sel, ctx) == pytest.approx(-np.log(2), rel=1e-9)


def test_evp_single_node(ctx):
    sel = np.zeros(12, bool)
    sel[5] = True
    assert evp_value(sel, ctx) == pytest.approx(np.prod(ctx.amplitude[5]))


def test_evp_zero_amplitude_node(ctx):
    amp = np.array(ctx.amplitude)
    assert np.all(amp >= 0)
    shapes = ctx.modal.shapes.copy()
    shapes[ctx.node_rows[4], 2] = 0.0
    z = CriterionContext(ctx.model, ModalData(ctx.modal.frequencies, shapes), ctx.mass)
    sel = np.zeros(12, bool)
    sel[4] = True
    assert evp_value(sel, z) == 0.0


def test_sign_flip_invariance(ctx):
    flips = np.array([1, -1, -1, 1, -1, 1.0])
    z = CriterionContext(ctx.model, ModalData(ctx.modal.frequencies, ctx.modal.shapes * flips), ctx.mass)
    sel = np.array([1, 0, 1, 1, 0, 1, 1, 0, 1, 0, 0, 1], bool)
    for name in CRITERIA:
        assert evaluate(name, sel, z) == pytest.approx(evaluate(name, sel, ctx), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.permutations(range(12)), st.lists(st.booleans(), min_size=12, max_size=12).filter(any))
def test_candidate_permutation_invariance(ctx, perm, bits):
    m = ctx.model
    cand = tuple(m.candidate_sensor_nodes[i] for i in perm)
    permuted = CriterionContext(
        JacketModel(m.nodes, m.elements, m.materials, m.sections, m.fixed_nodes, cand),
        ctx.modal, ctx.mass)
    bits = np.array(bits)
    for name in CRITERIA:
        a = evaluate(name, bits, ctx)
        b = evaluate(name, bits[list(perm)], permuted)
        assert a == pytest.approx(b, rel=1e-10) or (a == b == -np.inf)


def test_unknown_criterion():
    with pytest.raises(ValueError):
        get_criterion("mac")
    assert get_criterion("EVP") is evp_value
    assert get_criterion("ke") is ke_value


def test_batch_csv(tmp_path, ctx, subsets):
    write_batch_csv(tmp_path / "b.csv", ((s, evp_value(s, ctx)) for s in subsets[:5]), "evp")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "selection,count,criterion,J"
    assert lines[1].startswith("100000000000,1,evp,")
    assert len(lines) == 6
