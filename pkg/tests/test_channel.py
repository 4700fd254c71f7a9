import math

import numpy as np
import pytest

from gconv import channel as chm
from gconv import fock, statelib
from gconv.channel import GaussianChannel, apply_channel, fidelity_after_map, is_cp, is_cp_det_form
from gconv.errors import InvalidInputError, RejectedChannelError
from gconv.fock import FockVector
from gconv.phasespace import ExactChar, PhaseGrid, char_fn, char_values
from gconv.statelib import CatCode, FockBasis, Pass, build_state

from oracles import coherent_amps, kraus_loss

RNG_SEED = 20240611


def random_symplectic(rng):
    theta, phi = rng.uniform(0, 2 * math.pi, 2)
    r = rng.uniform(-2, 2)
    R = lambda t: np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    return R(theta) @ np.diag([math.exp(-r), math.exp(r)]) @ R(phi)


def test_is_cp_examples():
    assert is_cp(np.eye(2), np.zeros((2, 2)))
    rep = is_cp(np.zeros((2, 2)), np.eye(2))
    assert rep and rep.min_eig_plus == pytest.approx(0.0, abs=1e-12) and rep.det_slack == pytest.approx(0.0)
    rep = is_cp(0.5 * np.eye(2), np.zeros((2, 2)))
    assert not rep
    assert rep.det_slack == pytest.approx(-(0.75 ** 2))


def test_is_cp_rejects_non_symmetric_y():
    with pytest.raises(InvalidInputError):
        is_cp(np.eye(2), np.array([[1.0, 0.1], [0.0, 1.0]]))
    with pytest.raises(InvalidInputError):
        GaussianChannel(np.eye(2), np.array([[1.0, 0.1], [0.0, 1.0]]))
    with pytest.raises(InvalidInputError):
        is_cp(np.eye(3), np.zeros((2, 2)))


def test_symplectic_accepted_and_nonsymplectic_rejected():
    rng = np.random.default_rng(RNG_SEED)
    for _ in range(200):
        X = random_symplectic(rng)
        assert is_cp(X, np.zeros((2, 2)))
        scale = rng.uniform(0.3, 3.0)
        if abs(scale - 1) > 1e-3:
            assert not is_cp(scale * X, np.zeros((2, 2)))


def test_eigen_and_det_forms_agree():
    rng = np.random.default_rng(RNG_SEED + 1)
    agree = 0
    for _ in range(2000):
        X = rng.normal(size=(2, 2))
        A = rng.normal(size=(2, 2))
        Y = A @ A.T * rng.uniform(0, 2) - rng.uniform(0, 0.3) * np.eye(2)
        agree += bool(is_cp(X, Y)) == is_cp_det_form(X, Y)
    assert agree == 2000


def test_repair_makes_channels_cp():
    rng = np.random.default_rng(RNG_SEED + 2)
    for _ in range(500):
        X = rng.uniform(-8, 8, (2, 2))
        A = rng.normal(size=(2, 2))
        Y = chm.repair(X, A + A.T)
        assert is_cp(X, Y)
    # already-feasible Y is left alone
    assert np.allclose(chm.repair(np.zeros((2, 2)), 2 * np.eye(2)), 2 * np.eye(2))


def test_families_build_cp_channels_and_contain_identity():
    rng = np.random.default_rng(RNG_SEED + 3)
    for fam in chm.CHANNEL_FAMILIES.values():
        assert fam.channel(fam.identity_params).is_identity()
        for _ in range(200):
            params = [rng.uniform(lo, hi) for lo, hi in fam.bounds]
            ch = fam.channel(params)
            assert is_cp(ch.X, ch.Y)
    assert chm.get_family("squeeze-only") is chm.SQUEEZE_ONLY
    with pytest.raises(InvalidInputError):
        chm.get_family("nope")


def test_noiseless_embedding():
    ch = chm.SYMPLECTIC_DISPLACEMENT.channel([0.3, -0.4, 0.7, 0.2, -0.1])
    emb = chm.FULL_CPTP.channel(chm.FULL_CPTP.params_for_noiseless(ch))
    assert np.allclose(emb.X, ch.X) and np.allclose(emb.l, ch.l)
    assert np.abs(emb.Y).max() < 1e-14


def test_record_round_trip():
    ch = GaussianChannel([[1, 2], [3, 4]], [[2, 0.5], [0.5, 3]], [0.1, -0.2])
    rec = ch.to_record()
    assert list(rec) == ["x00", "x01", "x10", "x11", "y00", "y01", "y11", "l0", "l1"]
    back = GaussianChannel.from_record(rec)
    assert np.array_equal(back.X, ch.X) and np.array_equal(back.Y, ch.Y) and np.array_equal(back.l, ch.l)


def test_identity_channel_leaves_chi_unchanged():
    state = build_state(CatCode(2, 1.5, 1), 80)
    out = apply_channel(ExactChar(state), GaussianChannel.identity())
    q = np.linspace(-4, 4, 9)
    p = np.linspace(-3, 5, 9)
    assert np.array_equal(out(q, p), char_values(state, q, p))
    assert out(np.array(0.0), np.array(0.0)) == pytest.approx(1.0)


def test_rejected_channel():
    with pytest.raises(RejectedChannelError):
        apply_channel(ExactChar(build_state(FockBasis(0), 10)), GaussianChannel(0.5 * np.eye(2), np.zeros((2, 2))))


def test_loss_channel_matches_kraus_oracle():
    eta, alpha, dim = 0.5, 1.2 - 0.7j, 60
    coh = FockVector(coherent_amps(alpha, dim))
    lossy = apply_channel(ExactChar(coh), GaussianChannel(math.sqrt(eta) * np.eye(2), (1 - eta) * np.eye(2)))
    rho_out = kraus_loss(np.outer(coh.amps, coh.amps.conj()), eta)
    shrunk = coherent_amps(math.sqrt(eta) * alpha, dim)
    assert np.vdot(shrunk, rho_out @ shrunk).real == pytest.approx(1.0, abs=1e-6)
    rng = np.random.default_rng(RNG_SEED + 4)
    q, p = rng.uniform(-5, 5, (2, 40))
    ref = char_values(fock.DensityOperator(rho_out, check=False), q, p)
    assert np.abs(lossy(q, p) - ref).max() < 1e-6
    assert np.abs(lossy(q, p) - char_values(FockVector(shrunk), q, p)).max() < 1e-6


def test_loss_channel_on_cat_matches_kraus_oracle():
    state = build_state(CatCode(1, 1.5, 0), 60)
    eta = 0.7
    lossy = apply_channel(ExactChar(state), GaussianChannel(math.sqrt(eta) * np.eye(2), (1 - eta) * np.eye(2)))
    rho_out = kraus_loss(np.outer(state.amps, state.amps.conj()), eta)
    rng = np.random.default_rng(RNG_SEED + 5)
    q, p = rng.uniform(-5, 5, (2, 40))
    ref = char_values(fock.DensityOperator(rho_out, check=False), q, p)
    assert np.abs(lossy(q, p) - ref).max() < 1e-6


def test_displacement_channel():
    d = np.array([0.8, -1.1])
    vac = build_state(FockBasis(0), 60)
    out = apply_channel(ExactChar(vac), GaussianChannel(np.eye(2), np.zeros((2, 2)), d))
    beta = (d[0] + 1j * d[1]) / math.sqrt(2)
    ref_state = fock.apply(fock.displacement_op(beta, 60), vac)
    grid = PhaseGrid(5.0, 21)
    Q, P = grid.mesh()
    assert np.abs(out(Q, P) - char_fn(ref_state, grid).values).max() < 1e-10


def test_squeeze_channel_is_the_squeeze_unitary():
    big_xi = -0.4
    state = build_state(CatCode(1, 1.0, 0), 80)
    out = apply_channel(ExactChar(state), GaussianChannel.squeeze(big_xi))
    ref = fock.apply(fock.squeeze_op(big_xi, 80), state)
    rng = np.random.default_rng(RNG_SEED + 6)
    q, p = rng.uniform(-4, 4, (2, 30))
    assert np.abs(out(q, p) - char_values(ref, q, p)).max() < 1e-9


def test_sequential_composition():
    rng = np.random.default_rng(RNG_SEED + 7)
    state = build_state(CatCode(2, 1.3, 0), 60)
    for _ in range(5):
        X1, X2 = random_symplectic(rng) * 0.8, random_symplectic(rng) * 1.1
        ch1 = GaussianChannel(X1, chm.repair(X1, np.zeros((2, 2))), rng.normal(size=2))
        ch2 = GaussianChannel(X2, chm.repair(X2, np.eye(2) * 0.1), rng.normal(size=2))
        seq = apply_channel(apply_channel(ExactChar(state), ch1), ch2)
        joint = apply_channel(ExactChar(state), ch1.then(ch2))
        q, p = rng.uniform(-3, 3, (2, 25))
        assert np.abs(seq(q, p) - joint(q, p)).max() < 1e-12


def test_calibration():
    kappa = chm.calibrate()
    assert kappa == pytest.approx(1 / (2 * math.pi), rel=1e-6)
    rep = chm.calibration_report()
    assert rep["consistent"]
    assert all(abs(v - 1) < 1e-4 for v in rep["self_overlaps"].values())


CATALOG = [
    FockBasis(0), FockBasis(2), CatCode(1, 2.0, 0), CatCode(2, 1.0, 0), CatCode(2, 1.0, 1),
    statelib.BinomialCode(2, 2, 0), Pass(-2, 0, 0.3), Pass(2, 0, 0.2),
    statelib.CubicPhase(0.05, -fock.db_to_xi(5)), statelib.Trisqueezed(0.1),
    statelib.Gkp(statelib.gkp_delta_from_db(5)), statelib.SqueezedCoherent(0.5 + 0.5j, 0.3),
]


@pytest.mark.parametrize("k", range(8))
def test_identity_fidelity_matches_fock_overlap(k):
    rng = np.random.default_rng(RNG_SEED + 100 + k)
    i, j = rng.choice(len(CATALOG), 2, replace=False)
    a, b = CATALOG[i], CATALOG[j]
    f = fidelity_after_map(a, GaussianChannel.identity(), b)
    assert f == pytest.approx(fock.overlap_fidelity(build_state(a), build_state(b)), abs=1e-6)


def test_self_fidelity_of_even_cat():
    cat = CatCode(1, 2.0, 0)
    assert fidelity_after_map(cat, GaussianChannel.identity(), cat) == pytest.approx(1.0, abs=1e-4)


def test_squeeze_fidelity_matches_fock_route():
    inp, tgt = Pass(-2, 0, 0.6), CatCode(1, 2j, 0)
    f = fidelity_after_map(inp, GaussianChannel.squeeze(-0.3), tgt)
    ref = fock.overlap_fidelity(fock.apply(fock.squeeze_op(-0.3, 200), build_state(inp)), build_state(tgt))
    assert f == pytest.approx(ref, abs=1e-4)


def test_noisy_channel_fidelity_is_bounded():
    inp, tgt = CatCode(1, 1.0, 0), FockBasis(0)
    # replacing everything with vacuum gives exactly the vacuum
    f = fidelity_after_map(inp, GaussianChannel(np.zeros((2, 2)), np.eye(2)), tgt)
    assert f == pytest.approx(1.0, abs=1e-5)
    f = fidelity_after_map(inp, GaussianChannel(np.zeros((2, 2)), 3 * np.eye(2)), tgt)
    # thermal state with <n> = 1 has vacuum population 1/2
    assert f == pytest.approx(0.5, abs=1e-5)


def test_parity_orthogonal_overlap_is_zero_not_an_error():
    # squeezing keeps the odd photon-subtracted state orthogonal to Fock 2
    f = fidelity_after_map(Pass(-1, 0, 0.4), GaussianChannel.squeeze(0.2), FockBasis(2))
    assert f == pytest.approx(0.0, abs=1e-4)
