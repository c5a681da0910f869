import numpy as np
import pytest

from cdgopt.seeding import make_rng
from cdgopt.simulators import (
    C_HARD,
    CoverageEvent,
    Instruction,
    MultiplicationSimulator,
    NorthStarSimulator,
    Template,
    event_from_index,
    event_index,
    expert_template,
    mult_hits,
    mult_simulate,
    northstar_generate,
    northstar_hits,
    northstar_run,
)
from cdgopt.simulators.multiplication import (
    check_distribution,
    product_bins,
    quadratic_weights,
    uniform_bin_probabilities,
    uniform_product_cdf,
)
from cdgopt.simulators.northstar import (
    COVERAGE_START,
    COVERAGE_STOP,
    Pipeline,
    dirichlet_template,
    instruction_stream,
    reachability_counts,
    reference_hits,
    trace_run,
)

COMPLEX = {"Cm1", "Cm2", "Cm3"}


def all_nop():
    return Template([1, 0, 0, 0, 0], np.full(8, 1 / 8), np.full(8, 1 / 8), [0.5, 0.5])


# ---- multiplication model ---------------------------------------------------------


def test_uniform_product_cdf_values():
    assert uniform_product_cdf(0.0) == 0.0
    assert uniform_product_cdf(1.0) == pytest.approx(1.0)
    a = 0.01
    assert uniform_product_cdf(a) == pytest.approx(a - a * np.log(a))


def test_uniform_bin_probabilities_oracle():
    p = uniform_bin_probabilities(100)
    assert p.sum() == pytest.approx(1.0)
    assert p[0] == pytest.approx(0.01 + 0.01 * np.log(100), rel=1e-12)
    # 1 - P(XY <= 0.99) = 1 - 0.99 + 0.99 ln 0.99
    assert p[-1] == pytest.approx(0.01 + 0.99 * np.log(0.99), rel=1e-9)
    assert p[-1] == pytest.approx(5.0e-5, rel=0.01)


def test_all_mass_on_first_bin_always_hits_bin_one():
    w = np.zeros(100)
    w[0] = 1.0
    hits = mult_hits(w, 1000, make_rng(0))
    assert hits[:, 0].all()
    assert hits.sum() == 1000


def test_mult_simulate_one_bit():
    w = quadratic_weights(20)
    for seed in range(50):
        s = mult_simulate(w, seed)
        assert s.shape == (20,) and s.dtype == bool and s.sum() == 1


def test_product_bin_recomputed_directly():
    w = quadratic_weights(10)
    rng_a, rng_b = make_rng(5), make_rng(5)
    bins = product_bins(w, 500, rng_a)
    # replay the same draws by hand
    pick = rng_b.choice(10, size=(500, 2), p=w) + 1
    x = (pick - rng_b.random((500, 2))) / 10
    expected = np.clip(np.ceil(x[:, 0] * x[:, 1] * 10), 1, 10).astype(int)
    np.testing.assert_array_equal(bins, expected)
    assert np.all((x > (pick - 1) / 10) & (x <= pick / 10))


def test_mult_uniform_bin_one_rate():
    hits = mult_hits(np.full(100, 0.01), 200_000, make_rng(1))
    assert hits[:, 0].mean() == pytest.approx(0.0561, abs=0.003)


def test_quadratic_weights_raise_right_tail():
    n = 1_000_000
    uni = mult_hits(np.full(100, 0.01), n, make_rng(2)).mean(axis=0)
    quad = mult_hits(quadratic_weights(100), n, make_rng(3)).mean(axis=0)
    assert np.all(quad[90:] > uni[90:])


@pytest.mark.parametrize("weights", [[0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0], []])
def test_check_distribution_rejects(weights):
    with pytest.raises(ValueError):
        check_distribution(weights)


def test_multiplication_simulator_adapter():
    sim = MultiplicationSimulator(10)
    assert sim.n_events == sim.raw_dim == 10
    np.testing.assert_allclose(sim.weights(np.zeros(10)), np.full(10, 0.1))
    hits = sim.hits(np.zeros(10), 100, make_rng(0))
    assert hits.shape == (100, 10)
    with pytest.raises(ValueError):
        MultiplicationSimulator(0)


# ---- templates and instructions -------------------------------------------------


def test_template_validation():
    with pytest.raises(ValueError):
        Template([0.5, 0.5, 0, 0], np.full(8, 1 / 8), np.full(8, 1 / 8), [1, 0])
    with pytest.raises(ValueError):
        Template([0.3, 0.3, 0, 0, 0], np.full(8, 1 / 8), np.full(8, 1 / 8), [1, 0])
    t = Template.uniform()
    assert t.flat.shape == (23,)
    with pytest.raises(ValueError):
        t.iw[0] = 1.0


def test_template_from_vector_round_trip():
    t = expert_template()
    assert np.array_equal(Template.from_vector(t.flat).flat, t.flat)
    with pytest.raises(ValueError):
        Template.from_vector(np.ones(22))


def test_cumulative_tail_pinned():
    cum = expert_template().cumulative()
    # iw = (0.5, 0.2, 0, 0.3, 0): last positive weight is Cm2
    np.testing.assert_allclose(cum[0, :5], [0.5, 0.7, 0.7, 1.0, 1.0])
    assert np.all(cum[1, :8] == 1.0)


def test_instruction_validation():
    assert Instruction("Cm3", 0, 7, False).latency == 3
    assert Instruction("Sim", 0, 0, True).latency == 1
    with pytest.raises(ValueError):
        Instruction("Div", 0, 0, False)
    with pytest.raises(ValueError):
        Instruction("Sim", 8, 0, False)


def test_generate_all_nop():
    program = northstar_generate(all_nop(), 200, 1)
    assert {i.mnemonic for i in program} == {"Nop"}
    assert not any(i.uses_cr for i in program)


def test_generate_single_register_template():
    program = northstar_generate(expert_template(), 500, 2)
    assert all(i.src == 0 and i.tgt == 0 for i in program)
    assert not any(i.uses_cr for i in program)
    assert {i.mnemonic for i in program} <= {"Nop", "Sim", "Cm2"}


def test_generate_deterministic():
    a = northstar_generate(Template.uniform(), 300, 11)
    assert a == northstar_generate(Template.uniform(), 300, 11)
    assert a != northstar_generate(Template.uniform(), 300, 12)


def test_generate_frequencies_follow_weights():
    program = northstar_generate(Template.uniform(), 20_000, 4)
    counts = np.bincount([["Nop", "Sim", "Cm1", "Cm2", "Cm3"].index(i.mnemonic) for i in program], minlength=5)
    np.testing.assert_allclose(counts / 20_000, 0.2, atol=0.015)
    cr = np.mean([i.uses_cr for i in program if i.mnemonic != "Nop"])
    assert cr == pytest.approx(0.5, abs=0.02)


def test_generate_rejects_nonpositive_count():
    with pytest.raises(ValueError):
        northstar_generate(Template.uniform(), 0, 1)


# ---- coverage events ---------------------------------------------------------------


def test_event_index_anchors():
    assert event_index(CoverageEvent("Nop", "Nop", 0, 0, 0)) == 0
    assert event_from_index(79) == CoverageEvent("Cm3", "Sim", 1, 1, 1)
    assert C_HARD.index == 50


def test_event_index_round_trip():
    assert [event_from_index(i).index for i in range(80)] == list(range(80))
    assert len({event_from_index(i) for i in range(80)}) == 80


@pytest.mark.parametrize("bad", [-1, 80])
def test_event_from_index_out_of_range(bad):
    with pytest.raises(ValueError):
        event_from_index(bad)


def test_event_index_rejects_bad_bits():
    with pytest.raises(ValueError):
        event_index(CoverageEvent("Sim", "Nop", 2, 0, 0))


# ---- pipeline object model -----------------------------------------------------


@pytest.mark.parametrize("seed", range(20))
def test_pipe_occupancy_invariants(seed):
    template = dirichlet_template(make_rng(seed, 1))
    _, snaps, events = trace_run(template, seed, 200)
    for (s_pipe, c_pipe), event in zip(snaps, events):
        assert not COMPLEX & set(s_pipe)
        # a Sim only waits in C0 while S0 is occupied
        if c_pipe[0] == "Sim":
            assert s_pipe[0] == "Sim"
        assert not (event.c0_inst == "Sim" and event.s0_inst == "Nop")


@pytest.mark.parametrize("seed", range(10))
def test_execution_latency(seed):
    pipe, _, _ = trace_run(Template.uniform(), seed, 300)
    assert pipe.exec_cycles
    for inst, cycles in pipe.exec_cycles:
        assert cycles >= inst.latency


def test_data_dependency_stalls_issue():
    pipe = Pipeline()
    program = iter([Instruction("Cm3", 1, 2, False), Instruction("Sim", 2, 3, False)] +
                   [Instruction("Nop", 0, 0, False)] * 50)
    states = []
    for _ in range(8):
        pipe.step(program)
        states.append(pipe.snapshot())
    # the Sim reads r2, written by the Cm3: it may not execute before Cm3 writes back
    sim_exec = next(i for i, (s, _) in enumerate(states) if s[1] == "Sim")
    cm_wb = next(i for i, (_, c) in enumerate(states) if c[2] == "Cm3")
    assert sim_exec > cm_wb


@pytest.mark.parametrize("seed", range(10))
def test_liveness_everything_retires(seed):
    program = instruction_stream(dirichlet_template(make_rng(seed, 2)), make_rng(seed))
    pipe = Pipeline()
    cycles = 150
    for _ in range(cycles):
        pipe.step(program)
    assert len(pipe.retired) <= 2 * cycles
    for _ in range(100):
        if pipe.empty:
            break
        pipe.step(None)
    assert pipe.empty
    assert len(pipe.retired) == len(pipe.fetched)


def test_all_nop_template_never_hits_complex_events():
    hits = northstar_hits(all_nop(), 500, make_rng(0))
    assert hits[:, 0].all()
    assert hits.sum() == 500


# ---- compiled kernel ---------------------------------------------------------------


@pytest.mark.parametrize("seed", range(40))
def test_kernel_matches_object_model(seed):
    template = dirichlet_template(make_rng(seed, 3))
    np.testing.assert_array_equal(northstar_run(template, seed), reference_hits(template, seed))


def test_kernel_batch_matches_python_batch():
    template = dirichlet_template(make_rng(9))
    fast = northstar_hits(template, 30, make_rng(4))
    slow = northstar_hits(template, 30, make_rng(4), compiled=False)
    np.testing.assert_array_equal(fast, slow)


def test_run_deterministic():
    t = Template.uniform()
    np.testing.assert_array_equal(northstar_run(t, 123), northstar_run(t, 123))


def test_coverage_window_constants():
    assert (COVERAGE_START, COVERAGE_STOP) == (10, 110)


def test_expert_template_beats_uniform_on_hard_event():
    uni = northstar_hits(Template.uniform(), 20_000, make_rng(1))[:, C_HARD.index].mean()
    exp = northstar_hits(expert_template(), 20_000, make_rng(2))[:, C_HARD.index].mean()
    assert 0 < uni < 0.1
    assert exp >= 10 * uni


def test_empirical_coverage_variance_scales():
    template = Template.uniform()
    rng = make_rng(8)
    small = np.array([northstar_hits(template, 100, rng).mean(axis=0) for _ in range(50)])
    large = np.array([northstar_hits(template, 10_000, rng).mean(axis=0) for _ in range(50)])
    # averages are multiples of 1/N
    assert np.allclose(small * 100, np.round(small * 100))
    v_small, v_large = small.var(axis=0, ddof=1), large.var(axis=0, ddof=1)
    live = (v_large > 0) & (large.mean(axis=0) > 0.01) & (large.mean(axis=0) < 0.99)
    ratio = np.median(v_small[live] / v_large[live])
    assert 30 <= ratio <= 300


def test_reachability_small_sweep():
    counts = reachability_counts(n_templates=300, runs_per_template=20, seed=1)
    sim_nop = [event_index(CoverageEvent("Sim", "Nop", a, b, c)) for a in (0, 1) for b in (0, 1) for c in (0, 1)]
    assert counts[sim_nop].sum() == 0
    assert counts[C_HARD.index] > 0


def test_northstar_adapter():
    sim = NorthStarSimulator()
    assert (sim.n_events, sim.raw_dim) == (80, 23)
    a = sim.hits(np.zeros(23), 50, make_rng(3))
    b = sim.hits_for_weights(Template.uniform(), 50, make_rng(3))
    np.testing.assert_array_equal(a, b)
