import glob
import os

import pytest
import yaml

from conftest import CONFIG_DIR
from sdiflow.config import load_config, parse_config
from sdiflow.errors import ConfigError

BUNDLED = sorted(glob.glob(os.path.join(CONFIG_DIR, "*.yaml")))


def minimal(**overrides):
    data = {"problem": {"name": "rank_deficient_ls"},
            "integrator": {"h": 1e-2, "T": 10.0},
            "ensemble": {"n_paths": 4, "base_seed": 1, "x0": [0.0, 5.0]}}
    for key, value in overrides.items():
        data[key] = value
    return data


class TestBundled:
    @pytest.mark.parametrize("path", BUNDLED, ids=os.path.basename)
    def test_parses(self, path):
        cfg = load_config(path)
        assert cfg.build_problem().dim >= 1

    @pytest.mark.parametrize("path", BUNDLED, ids=os.path.basename)
    def test_round_trip(self, path):
        cfg = load_config(path)
        again = parse_config(yaml.safe_load(cfg.to_yaml()))
        assert again == cfg
        assert again.to_yaml() == cfg.to_yaml()


class TestValidation:
    def test_defaults(self):
        cfg = parse_config(minimal())
        assert cfg.tikhonov.kind == "off" and cfg.noise.sigma_star == 0.0
        assert cfg.integrator.scheme == "prox_em" and cfg.integrator.n_records == 64

    @pytest.mark.parametrize("data,path", [
        (minimal(problem={"name": "rosenbrock"}), "problem.name"),
        (minimal(problem={}), "problem.name"),
        (minimal(problem={"name": "rank_deficient_ls", "params": {"dim": "two"}}), "problem.params"),
        (minimal(integrator={"h": -1.0}), "integrator.h"),
        (minimal(integrator={"h": 0.5, "T": 10.0, "scheme": "rk4"}), "integrator.scheme"),
        (minimal(integrator={"h": 1e-2, "T": 0.5}), "integrator.T"),
        (minimal(integrator={"h": 2.0, "T": 10.0}), "integrator.h"),
        (minimal(integrator={"h": 1e-2, "T": 10.0, "stepsize": 1}), "integrator.stepsize"),
        (minimal(tikhonov={"kind": "power", "r": 1.5}), "tikhonov.r"),
        (minimal(noise={"kind": "power", "sigma_star": -1.0}), "noise.sigma_star"),
        (minimal(noise={"state_coupling": 2.0}), "noise.state_coupling"),
        (minimal(ensemble={"n_paths": 1}), "ensemble.n_paths"),
        (minimal(ensemble={"n_paths": 4, "x0": [1.0, 2.0, 3.0]}), "ensemble.x0"),
        (minimal(analysis={"rates": [{"observable": "energy"}]}), "analysis.rates[0].observable"),
        (minimal(analysis={"rates": [{"observable": "gap", "window": [10.0, 1.0]}]}),
         "analysis.rates[0].window"),
        (minimal(analysis={"bounds": ["tight"]}), "analysis.bounds"),
        (minimal(analysis={"eps_grid": [0.1, 0.0]}), "analysis.eps_grid"),
        (minimal(analysis={"tikhonov_grid": {"start": 0.1, "stop": 0.0}}), "analysis.tikhonov_grid.stop"),
        (minimal(output=3), "output"),
        (minimal(extra={}), "extra"),
    ])
    def test_field_path(self, data, path):
        with pytest.raises(ConfigError) as exc:
            parse_config(data)
        assert exc.value.path == path, str(exc.value)

    def test_not_a_table(self):
        with pytest.raises(ConfigError):
            parse_config(["problem"])

    def test_yaml_syntax_error(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("problem:\n  name: [rank_deficient_ls\n")
        with pytest.raises(ConfigError, match="line"):
            load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "nope.yaml")

    def test_tikhonov_grid(self):
        cfg = parse_config(minimal(analysis={"tikhonov_grid": {"start": 0.1, "stop": 1e-3, "num": 3}}))
        assert cfg.analysis.eps_grid == pytest.approx((0.1, 1e-2, 1e-3))

    def test_yosida_lambda_bound(self):
        data = minimal(problem={"name": "l1_quadratic"},
                       integrator={"scheme": "yosida_em", "h": 0.1, "lambda": 0.01, "T": 10.0})
        data["ensemble"]["x0"] = [0.0, 0.0, 0.0, 0.0]
        with pytest.raises(ConfigError, match="lambda"):
            parse_config(data)
