import pytest
from hypothesis import given
from hypothesis import strategies as st

from femtoho.config import ConfigError, parse_config, render_config, validate, with_overrides
from femtoho.mobility import KMH
from femtoho.sim import DEFAULT_SEED, ScenarioConfig

HEAVY = """\
[run]
command = sweep-k

[queuing]
N = 10
lambda_nf = 0.1
lambda_hm = 0.075 /s
service_time = 120 s
"""


def test_heavy_file():
    cfg = parse_config(HEAVY)
    q = cfg.queuing
    assert (q.num_channels, q.new_call_rate, q.handover_rate) == (10, 0.1, 0.075)
    assert q.service_rate == pytest.approx(1 / 120)
    assert q.guard_threshold is None
    assert q.params().guard_threshold == 10
    assert cfg.seed == DEFAULT_SEED and cfg.format == "csv"


def test_empty_cac_section_gives_default_scenario():
    cfg = parse_config("[cac]\n")
    assert cfg.scenario == ScenarioConfig()
    s = cfg.scenario
    assert (s.geometry.radius, s.mobility.mean_call_life, s.num_faps) == (10.0, 90.0, 150)
    assert s.mobility.mean_velocity == pytest.approx(KMH)
    assert s.thresholds.velocity_threshold == pytest.approx(10 * KMH)
    assert cfg.t_values == (0.0, 10.0, 20.0)


@pytest.mark.parametrize(
    "line,si",
    [
        ("velocity_threshold = 36 km/h", 10.0),
        ("velocity_threshold = 2 m/s", 2.0),
        ("mean_call_life = 1.5 min", 90.0),
        ("radius = 0.02 km", 20.0),
        ("threshold_time = 500 ms", 0.5),
    ],
)
def test_units(line, si):
    s = parse_config(f"[cac]\n{line}\n").scenario
    got = {
        "velocity_threshold": s.thresholds.velocity_threshold,
        "mean_call_life": s.mobility.mean_call_life,
        "radius": s.geometry.radius,
        "threshold_time": s.thresholds.min_dwell,
    }[line.split()[0]]
    assert got == pytest.approx(si)


def test_rate_per_minute():
    q = parse_config(HEAVY.replace("lambda_nf = 0.1", "lambda_nf = 6 /min")).queuing
    assert q.new_call_rate == pytest.approx(0.1)


def test_t_values_list():
    assert parse_config("[cac]\nt_values = 0, 10 s, 0.5 min\n").t_values == (0.0, 10.0, 30.0)


def test_comments_and_blank_lines():
    cfg = parse_config("# scenario\n\n[run]\nseed = 4   # fixed\n")
    assert cfg.seed == 4 and cfg.scenario.seed == 4


class TestErrors:
    def error(self, text, **kw):
        with pytest.raises(ConfigError) as info:
            parse_config(text, **kw)
        return info.value

    def test_k_above_n_cites_line(self):
        err = self.error(HEAVY + "K = 12\n")
        assert err.line == 9
        assert str(err).startswith("line 9:")

    def test_unknown_key(self):
        err = self.error("[cac]\nspeed = 3\n")
        assert err.line == 2 and "speed" in str(err)

    def test_unknown_section(self):
        assert self.error("[radio]\n").line == 1

    def test_duplicate_alias(self):
        assert self.error(HEAVY + "channels = 12\n").line == 9

    def test_missing_required(self):
        err = self.error("[queuing]\nN = 10\nlambda_nf = 0.1\n")
        assert "handover_rate" in str(err) and err.line == 1

    def test_missing_service(self):
        assert "service_rate" in str(self.error("[queuing]\nN = 3\nlambda_nf = 1\nlambda_hm = 1\n"))

    def test_non_positive_rate(self):
        assert self.error(HEAVY.replace("service_time = 120 s", "mu = 0")).line == 8

    def test_wrong_unit(self):
        assert self.error("[cac]\nradius = 10 s\n").line == 2

    def test_garbage_value(self):
        assert self.error("[cac]\ntrials = many\n").line == 2

    def test_key_outside_section(self):
        assert self.error("seed = 3\n").line == 1

    def test_unknown_command(self):
        assert self.error("[run]\ncommand = fly\n").line == 2

    def test_blocking_needs_k(self):
        with pytest.raises(ConfigError, match="guard_threshold"):
            parse_config(HEAVY, command="blocking")

    def test_flow_needs_kind(self):
        with pytest.raises(ConfigError):
            parse_config("", command="flow")

    def test_bad_flow_kind(self):
        assert self.error("[flow]\nkind = SIDEWAYS\n").line == 2

    def test_negative_threshold_time(self):
        assert self.error("[cac]\n\nT = -1\n").line == 3


def test_render_round_trip():
    text = HEAVY + "K = 8\ncriterion = marginal\n\n[cac]\nT = 10 s\ncir_threshold = 15 dB\n\n[flow]\nkind = MEDIUM_MACRO_TO_FEMTO\n"
    cfg = parse_config(text)
    again = parse_config(render_config(cfg))
    assert again == cfg
    assert render_config(again) == render_config(cfg)


@given(
    st.integers(1, 40).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n))),
    st.floats(0, 10, allow_subnormal=False),
    st.floats(1e-4, 10),
    st.floats(0, 100),
    st.integers(0, 2**31),
)
def test_render_round_trip_property(nk, lam, mu, t, seed):
    n, k = nk
    text = (
        f"[run]\nseed = {seed}\n[queuing]\nN = {n}\nK = {k}\nlambda_nf = {lam!r}\n"
        f"lambda_hm = {lam!r}\nmu = {mu!r}\n[cac]\nT = {t!r}\n"
    )
    cfg = parse_config(text)
    assert parse_config(render_config(cfg)) == cfg


class TestOverrides:
    def test_seed_and_trials_reach_the_scenario(self):
        cfg = with_overrides(parse_config(""), seed=9, trials=7)
        assert cfg.seed == cfg.scenario.seed == 9
        assert cfg.scenario.trials == 7

    def test_none_means_unchanged(self):
        cfg = parse_config(HEAVY)
        assert with_overrides(cfg, seed=None, output=None) == cfg

    def test_bad_overrides(self):
        with pytest.raises(ConfigError):
            with_overrides(parse_config(""), trials=0)
        with pytest.raises(ConfigError):
            with_overrides(parse_config(""), format="xml")

    def test_validate_passes_through(self):
        cfg = parse_config(HEAVY)
        assert validate(cfg) is cfg
