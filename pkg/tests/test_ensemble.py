import math

import numpy as np
import pytest
from scipy import stats

from pilotwave import ensemble as ens
from pilotwave.guidance import IntegratorSettings, com_oracle
from pilotwave.rng import master_key, pair_stream
from pilotwave.wavepacket import PhysicalParams, joint_density

P = PhysicalParams()


@pytest.fixture(scope="module")
def eq_sample():
    return ens.sample(ens.EnsembleConfig(n_pairs=40_000, master_seed=11), P)


@pytest.fixture(scope="module")
def anti_sample():
    return ens.sample(ens.EnsembleConfig(n_pairs=40_000, master_seed=11, constraint="antidiagonal"), P)


def test_pair_streams_are_reproducible_and_distinct():
    key = master_key(5)
    a = pair_stream(5, 3, key).random(4)
    assert np.array_equal(a, pair_stream(5, 3).random(4))
    assert not np.array_equal(a, pair_stream(5, 4, key).random(4))
    assert not np.array_equal(a, pair_stream(6, 3).random(4))


def test_sampling_is_seed_deterministic_and_prefix_stable():
    a = ens.sample(ens.EnsembleConfig(n_pairs=300, master_seed=3), P)
    b = ens.sample(ens.EnsembleConfig(n_pairs=300, master_seed=3), P)
    c = ens.sample(ens.EnsembleConfig(n_pairs=100, master_seed=3), P)
    d = ens.sample(ens.EnsembleConfig(n_pairs=300, master_seed=4), P)
    assert np.array_equal(a.y1, b.y1) and np.array_equal(a.y2, b.y2)
    # each pair owns its own substream, so the first 100 do not depend on n_pairs
    assert np.array_equal(a.y1[:100], c.y1)
    assert not np.array_equal(a.y1, d.y1)


def test_equilibrium_moments(eq_sample):
    y1, y2 = eq_sample.y1, eq_sample.y2
    n = len(y1)
    com = 0.5 * (y1 + y2)
    assert abs(com.mean()) < 4 * com.std() / math.sqrt(n)
    # sd of y1: delta-method standard error from the sample fourth moment
    var = y1.var()
    mu4 = np.mean((y1 - y1.mean()) ** 4)
    se = math.sqrt(mu4 - var**2) / (2 * math.sqrt(var) * math.sqrt(n))
    assert abs(y1.std(ddof=1) - math.sqrt(P.Y**2 + P.sigma0**2)) < 4 * se


def test_equilibrium_histogram_matches_density(eq_sample):
    assert ens.equivariance_distance(eq_sample, P) < ens.mc_bound(len(eq_sample))


def test_equilibrium_joint_chi_square(eq_sample):
    edges = np.array([-np.inf, -7, -5.5, -5, -4.5, -3, 3, 4.5, 5, 5.5, 7, np.inf])
    counts = ens.histogram_counts(eq_sample, edges).ravel()
    from pilotwave.quadrature import gauss_legendre_panels

    x, w = gauss_legendre_panels(-15, 15, 600, 8)
    d = joint_density(x[:, None], x[None, :], 0.0, P) * w[:, None] * w[None, :]
    cell = np.searchsorted(edges, x, side="right") - 1
    k = len(edges) - 1
    model = np.zeros((k, k))
    np.add.at(model, (cell[:, None], cell[None, :]), d)
    exp = model.ravel() * len(eq_sample)
    keep = exp > 20
    chi2 = np.sum((counts[keep] - exp[keep]) ** 2 / exp[keep])
    assert stats.chi2.sf(chi2, keep.sum() - 1) > 1e-4


def test_distance_shrinks_with_sample_size():
    cfg = ens.EnsembleConfig(n_pairs=4 * 25_000, master_seed=21)
    big = ens.sample(cfg, P)
    small = ens.PointSet(big.y1[:25_000], big.y2[:25_000], 0.0)
    ratio = ens.equivariance_distance(big, P) / ens.equivariance_distance(small, P)
    assert 0.35 < ratio < 0.7


def test_constrained_sample_is_exact_antidiagonal(anti_sample):
    assert np.array_equal(anti_sample.y2, -anti_sample.y1)


def test_constrained_slice_distribution(anti_sample):
    grid = np.linspace(-15, 15, 200_001)
    dens = joint_density(grid, -grid, 0.0, P)
    cdf = np.concatenate([[0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    res = stats.kstest(anti_sample.y1, lambda y: np.interp(y, grid, cdf))
    assert res.pvalue > 1e-3


def test_com_spread_values(eq_sample):
    pts = ens.PointSet(np.array([1.0, 3.0]), np.array([1.0, 3.0]))
    assert ens.com_spread(pts) == pytest.approx(math.sqrt(2.0))
    assert ens.com_spread(list(pts)) == pytest.approx(math.sqrt(2.0))
    with pytest.raises(ValueError):
        ens.com_spread(ens.PointSet(np.array([1.0]), np.array([2.0])))
    n = len(eq_sample)
    se = (P.sigma0 / math.sqrt(2)) / math.sqrt(2 * (n - 1))
    assert abs(ens.com_spread(eq_sample) - P.sigma0 / math.sqrt(2)) < 4 * se


def test_envelope_violation_is_raised():
    cfg = ens.EnsembleConfig(n_pairs=4)

    def draw(g):
        return g.random((ens._BLOCK, 1)), g.random(ens._BLOCK)

    with pytest.raises(ens.EnvelopeViolation):
        ens._rejection_loop(cfg, draw, lambda p: 1.5 * np.ones(len(p)))


def test_sampler_constraint_checks():
    with pytest.raises(ValueError):
        ens.sample_equilibrium(ens.EnsembleConfig(constraint="antidiagonal"), P)
    with pytest.raises(ValueError):
        ens.sample_constrained(ens.EnsembleConfig(), P)
    with pytest.raises(ValueError):
        ens.EnsembleConfig(constraint="diagonal")
    with pytest.raises(ValueError):
        ens.EnsembleConfig(n_pairs=0)


@pytest.fixture(scope="module")
def small_run():
    pts = ens.sample(ens.EnsembleConfig(n_pairs=1500, master_seed=8), P)
    return pts, ens.evolve_ensemble(pts, P.t0, params=P, workers=1)


def test_worker_count_does_not_change_output(small_run):
    pts, one = small_run
    many = ens.evolve_ensemble(pts, P.t0, params=P, workers=8, chunk=100)
    few = ens.evolve_ensemble(pts, P.t0, params=P, workers=3, chunk=100)
    assert np.array_equal(many.y1, few.y1) and np.array_equal(many.y2, few.y2)
    assert np.array_equal(many.status, few.status)
    # the chunking itself is invisible too: each pair is integrated independently
    assert np.array_equal(one.y1, many.y1)


def test_evolved_com_follows_oracle(small_run):
    pts, arr = small_run
    com0 = 0.5 * (pts.y1 + pts.y2)
    com = 0.5 * (arr.y1 + arr.y2)
    err = np.abs(com - com_oracle(com0, P.t0, P)) / (np.abs(com0) + P.sigma0)
    assert err[arr.completed].max() < 1e-6


def test_flow_composition(small_run):
    pts, full = small_run
    half = ens.evolve_ensemble(pts, 0.5 * P.t0, params=P)
    rest = ens.evolve_ensemble(half.points, P.t0, params=P)
    assert np.max(np.abs(rest.y1 - full.y1[half.completed])) < 1e-6
    assert np.max(np.abs(rest.y2 - full.y2[half.completed])) < 1e-6


def test_python_backend_matches_compiled(small_run):
    from pilotwave import _backend

    if "compiled" not in _backend.BACKENDS:
        pytest.skip("compiled extension not built")
    pts, arr = small_run
    sub = ens.PointSet(pts.y1[:40], pts.y2[:40])
    py = ens.evolve_ensemble(sub, P.t0, params=P, backend="python")
    assert np.max(np.abs(py.y1 - arr.y1[:40])) < 1e-8


def test_constrained_evolution_stays_antidiagonal(anti_sample):
    sub = ens.PointSet(anti_sample.y1[:2000], anti_sample.y2[:2000])
    arr = ens.evolve_ensemble(sub, P.t0, params=P, workers=4)
    assert np.max(np.abs(arr.y1 + arr.y2)) < 1e-8 * P.sigma0


def test_abort_fraction_guard():
    pts = ens.sample(ens.EnsembleConfig(n_pairs=200, master_seed=1), P)
    with pytest.raises(ens.AbortFractionExceeded) as info:
        ens.evolve_ensemble(pts, 2.0, IntegratorSettings(node_eps=0.5), params=P)
    arr = info.value.arrivals
    assert arr.aborted_count > 0
    assert len(arr.points) == len(arr) - arr.aborted_count


def test_evolve_validation(small_run):
    pts, _ = small_run
    with pytest.raises(ValueError):
        ens.evolve_ensemble(pts, 0.0, params=P)


def test_pointset_from_points():
    from pilotwave.guidance import PhasePoint

    ps = ens.PointSet.from_points([PhasePoint(1, 2, 0.5), PhasePoint(3, 4, 0.5)])
    assert ps.t == 0.5 and list(ps.y2) == [2, 4]
    with pytest.raises(ValueError):
        ens.PointSet.from_points([PhasePoint(1, 2, 0.5), PhasePoint(3, 4, 0.6)])


def test_csv_writers(tmp_path, small_run):
    _, arr = small_run
    ens.write_arrivals_csv(tmp_path / "a.csv", arr)
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "pair_id,y1_0,y2_0,y1_t,y2_t,status"
    assert len(lines) == len(arr) + 1
    row = lines[1].split(",")
    assert float(row[3]) == arr.y1[0] and row[5] == "completed"
    ens.write_histogram_csv(tmp_path / "h.csv", arr, P)
    rows = (tmp_path / "h.csv").read_text().splitlines()
    assert rows[0] == "bin_y1_lo,bin_y2_lo,count,model_prob"
    assert len(rows) == ens.HIST_BINS**2 + 1
    assert sum(int(r.split(",")[2]) for r in rows[1:]) <= len(arr)
