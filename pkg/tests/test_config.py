import json

import numpy as np
import pytest

from gdps.config import ConfigError, parse_config
from gdps.core import Method

MINIMAL = """
prior.preset = canonical2d
operator.kind = gaussian_blur
sampler.gdps.method = GDPS
"""


def write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config_defaults(tmp_path):
    c = parse_config(write(tmp_path, MINIMAL))
    s = c.schedule
    assert (s.sigma_min, s.sigma_max, s.rho, s.outer_steps, s.inner_steps) == (0.01, 100.0, 7.0, 200, 5)
    assert c.samplers["gdps"].gamma == 10.0
    assert c.noise_sigma == 0.05 and c.trials == 1 and c.seed == 0 and c.task == "GD"


def test_default_samplers_when_none_given(tmp_path):
    c = parse_config(write(tmp_path, "prior.preset = canonical2d\noperator.kind = gaussian_blur\n"))
    assert {n: s.method for n, s in c.samplers.items()} == {"daps": Method.DAPS, "gdps": Method.GDPS}


def test_long_tasks_use_longer_ladder(tmp_path):
    c = parse_config(write(tmp_path, "prior.preset = canonical2d\noperator.kind = dft_magnitude\n"))
    assert (c.schedule.outer_steps, c.schedule.inner_steps, c.samplers["gdps"].gamma) == (400, 10, 7.0)


@pytest.mark.parametrize(
    "method,kind,gamma",
    [("G_SITCOM", "downsample", 7.0), ("G_LATENTDAPS", "hdr", 1.0), ("GDPS", "random_inpaint", 5.0)],
)
def test_task_gamma_defaults(tmp_path, method, kind, gamma):
    text = f"prior.preset = canonical2d\noperator.kind = {kind}\nsampler.s.method = {method}\nlatent.dim = 1\n"
    if kind == "downsample":
        text += "prior.shape = 2\noperator.factor = 2\n"
    assert parse_config(write(tmp_path, text)).samplers["s"].gamma == gamma


def test_unknown_key_is_cited(tmp_path):
    with pytest.raises(ConfigError, match="gama"):
        parse_config(write(tmp_path, MINIMAL + "sampler.gdps.gama = 2.0\n"))
    with pytest.raises(ConfigError, match="'schedule.steps'"):
        parse_config(write(tmp_path, MINIMAL + "schedule.steps = 2\n"))


def test_parse_errors_cite_line(tmp_path):
    with pytest.raises(ConfigError, match=r":3:"):
        parse_config(write(tmp_path, "prior.preset = canonical2d\n# ok\nno equals sign\n"))
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(write(tmp_path, MINIMAL + "operator.kind = hdr\n"))


@pytest.mark.parametrize(
    "extra,field",
    [
        ("sampler.gdps.gamma = -1\n", "sampler.gdps"),
        ("sampler.gdps.langevin_steps = 2.5\n", "langevin_steps"),
        ("experiment.trials = 0\n", "experiment.trials"),
        ("schedule.outer_steps = 0\n", "schedule"),
        ("sampler.x.gamma = 1\n", "sampler.x.method"),
        ("sampler.x.method = FOO\n", "sampler.x.method"),
        ("measurement.sigma = -0.1\n", "measurement.sigma"),
    ],
)
def test_validation_errors_name_the_field(tmp_path, extra, field):
    with pytest.raises(ConfigError, match=field):
        parse_config(write(tmp_path, MINIMAL + extra))


def test_gamma_required_without_task(tmp_path):
    text = "prior.preset = canonical2d\noperator.kind = identity\nsampler.g.method = GDPS\n"
    with pytest.raises(ConfigError, match="gamma"):
        parse_config(write(tmp_path, text))


def test_latent_dim_required(tmp_path):
    with pytest.raises(ConfigError, match="latent.dim"):
        parse_config(write(tmp_path, MINIMAL + "sampler.l.method = G_LATENTDAPS\n"))


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(write(tmp_path, "prior.file = nope.json\noperator.kind = identity\n"))
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "absent.cfg")


def test_inline_prior_and_files(tmp_path):
    (tmp_path / "kernel.csv").write_text("0.2\n0.3\n0.5\n")
    (tmp_path / "mask.csv").write_text("0\n2\n")
    (tmp_path / "prior.json").write_text(
        json.dumps({"weights": [1.0], "means": [[0.1, 0.2, 0.3]], "covariances": [np.eye(3).tolist()]})
    )
    c = parse_config(write(tmp_path, "prior.file = prior.json\noperator.kind = motion_blur\noperator.kernel_file = kernel.csv\nsampler.m.method = GDPS\nsampler.m.gamma = 1\n"))
    np.testing.assert_allclose(c.operator.apply(np.array([0.0, 1.0, 0.0])), [0.2, 0.3, 0.5])
    c = parse_config(write(tmp_path, "prior.means = 0 0 0; 1 1 1\nprior.variances = 0.1 0.2\noperator.kind = mask\noperator.mask_file = mask.csv\nsampler.m.method = DAPS\n"))
    assert c.prior.n_components == 2 and c.operator.output_dim == 2
    c = parse_config(write(tmp_path, "prior.means = 0 0\nprior.covariances = 1 0.5 0.5 1\noperator.kind = identity\nsampler.m.method = DAPS\n"))
    np.testing.assert_allclose(c.prior.covariances[0], [[1, 0.5], [0.5, 1]])


def test_every_hyperparameter_is_settable(tmp_path):
    text = MINIMAL + "\n".join(
        [
            "sampler.gdps.gamma = 0.3",
            "sampler.gdps.langevin_steps = 7",
            "sampler.gdps.langevin_eta = 0.2",
            "sampler.gdps.eta_rule = fixed",
            "sampler.gdps.beta_y = 0.1",
            "sampler.gdps.r_scale = 2",
            "sampler.gdps.lambda = 3",
            "sampler.gdps.sitcom_inner_steps = 4",
            "sampler.gdps.sitcom_step = 0.05",
            "sampler.gdps.final_langevin = false",
            "sampler.gdps.stage2_init = anchor",
            "schedule.sigma_min = 0.02",
            "schedule.sigma_max = 50",
            "schedule.outer_steps = 30",
            "schedule.inner_steps = 3",
            "schedule.rho = 5",
            "measurement.sigma = 0.1",
            "experiment.trials = 3",
            "experiment.seed = 11",
        ]
    )
    c = parse_config(write(tmp_path, text))
    d = c.samplers["gdps"].as_dict()
    assert d["gamma"] == 0.3 and d["langevin_steps"] == 7 and d["eta_rule"] == "fixed" and d["lambda"] == 3.0
    assert d["r_scale"] == 2.0 and d["final_langevin"] is False and d["seed"] == 11
    assert c.schedule.outer_steps == 30 and c.schedule.rho == 5.0 and c.noise_sigma == 0.1


def test_overrides_apply_and_are_validated(tmp_path):
    p = write(tmp_path, MINIMAL)
    c = parse_config(p, {"experiment.trials": "4", "sampler.gdps.gamma": "0.5"})
    assert c.trials == 4 and c.samplers["gdps"].gamma == 0.5
    with pytest.raises(ConfigError, match="bogus"):
        parse_config(p, {"bogus": "1"})
    assert c.with_overrides(seed=5).seed == 5
