import glob
import os

import pytest

from config import KINDS, ExperimentConfig, load_config, parse_config
from errors import ConfigError

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def base_doc(kind="simulate", **sections):
    doc = {
        "experiment": {"kind": kind},
        "params": {"a": 1.5, "delta": 0.0},
        "measure": {"kind": "delta"},
        "grid": {"T": 0.5, "L": 4.0, "n_t": 32, "n_x": 64},
        "ensemble": {"replicates": 4, "seed": 1},
    }
    doc.update(sections)
    return doc


@pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(CONFIG_DIR, "*.toml"))))
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert cfg.kind in KINDS


def test_every_kind_has_a_config():
    kinds = {load_config(p).kind for p in glob.glob(os.path.join(CONFIG_DIR, "*.toml"))}
    assert kinds == set(KINDS)


@pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(CONFIG_DIR, "*.toml"))))
def test_round_trip(path):
    cfg = load_config(path)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize(
    "section, value, field",
    [
        ("params", {"a": 2.5, "delta": 0.0}, "params.a"),
        ("params", {"a": 1.5, "delta": 0.9}, "params.delta"),
        ("rho", {"kind": "cubic"}, "rho.kind"),
        ("rho", {"kind": "linear", "lam": 0.0}, "rho.lam"),
        ("grid", {"T": 1.0, "L": 4.0, "n_t": 2, "n_x": 64}, "grid.n_t"),
        ("grid", {"T": -1.0}, "grid.T"),
        ("measure", {"kind": "comet"}, "measure.kind"),
        ("measure", {"kind": "indicator", "half_width": 0.0}, "measure.half_width"),
        ("ensemble", {"replicates": 1}, "ensemble.replicates"),
        ("ensemble", {"seed": -3}, "ensemble.seed"),
        ("ladders", {"t": [0.3]}, "ladders.t[0]"),
    ],
)
def test_invalid_fields_are_named(section, value, field):
    with pytest.raises(ConfigError) as err:
        parse_config(base_doc(**{section: value}))
    assert err.value.field == field


def test_unknown_key_and_section():
    with pytest.raises(ConfigError) as err:
        parse_config(base_doc(grid={"T": 1.0, "dt": 0.1}))
    assert err.value.field == "grid.dt"
    with pytest.raises(ConfigError) as err:
        parse_config(base_doc(extras={}))
    assert err.value.field == "extras"


def test_unknown_kind():
    with pytest.raises(ConfigError) as err:
        parse_config(base_doc(kind="bake"))
    assert err.value.field == "experiment.kind"


def test_compare_needs_ordered_measures():
    doc = base_doc("compare", ladders={"levels": [1, 2, 3]})
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert err.value.field == "measure2"
    doc["measure2"] = {"kind": "delta", "mass": 0.5}
    with pytest.raises(ConfigError):
        parse_config(doc)
    doc["measure2"] = {"kind": "delta", "mass": 2.0}
    assert parse_config(doc).measure2.mass == 2.0


@pytest.mark.parametrize(
    "kind, ladders, field",
    [
        ("intermittency", {"t": [0.25, 0.5]}, "ladders.t"),
        ("weak-convergence", {"t": [0.5]}, "ladders.t"),
        ("approx-ladder", {"eps": [0.1, 0.05]}, "ladders.eps"),
        ("compare", {"levels": [1, 2]}, "ladders.levels"),
    ],
)
def test_ladder_lengths(kind, ladders, field):
    doc = base_doc(kind, ladders=ladders, measure2={"kind": "delta", "mass": 2.0})
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert err.value.field == field


def test_cfl_override():
    cfg = parse_config(base_doc(grid={"T": 1.0, "L": 4.0, "n_t": 2, "n_x": 64, "allow_cfl_violation": True}, checks={"probes": [[0.5, 0.0]]}))
    assert cfg.grid.allow_cfl_violation


def test_checks_are_free_form():
    cfg = parse_config(base_doc(checks={"probes": [[0.5, 0.0]], "se_multiplier": 4.0}))
    assert cfg.check("probes", None) == ((0.5, 0.0),)
    assert cfg.check("missing", 7) == 7


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[params\na = 1.5\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_load_names_field(tmp_path):
    path = tmp_path / "bad_a.toml"
    path.write_text('[experiment]\nkind = "simulate"\n[params]\na = 2.5\n')
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert err.value.field == "params.a"


@pytest.mark.parametrize(
    "checks, field",
    [
        ({"probes": [[0.3333, 0.0]]}, "checks.probes[0]"),
        ({"probes": [[0.25, 0.1]]}, "checks.probes[0]"),
        ({"probes": [[0.25]]}, "checks.probes[0]"),
        ({"probes": []}, "checks.probes"),
        ({"se_multiplier": -1.0}, "checks.se_multiplier"),
    ],
)
def test_simulate_probes_sit_on_the_lattice(checks, field):
    with pytest.raises(ConfigError) as err:
        parse_config(base_doc(checks=checks))
    assert err.value.field == field


def test_default_probes_need_the_horizon():
    with pytest.raises(ConfigError) as err:
        parse_config(base_doc(grid={"T": 0.25, "L": 4.0, "n_t": 32, "n_x": 64}))
    assert err.value.field == "checks.probes[0]"


@pytest.mark.parametrize(
    "checks, field",
    [
        ({"kernel_n_x": 128}, "checks.kernel_n_x"),
        ({"kernel_n_t": 1}, "checks.kernel_n_t"),
        ({"series_tol": 0.0}, "checks.series_tol"),
        ({"heat_rtol": "tight"}, "checks.heat_rtol"),
    ],
)
def test_kernel_grid_fields(checks, field):
    with pytest.raises(ConfigError) as err:
        parse_config(base_doc("kernel-checks", checks=checks))
    assert err.value.field == field


def test_approx_probe_checked_before_compute():
    doc = base_doc("approx-ladder", ladders={"eps": [0.1, 0.05, 0.025, 0.0125]}, checks={"probe_t": 0.3})
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert err.value.field == "checks.probe_t"
    doc["ensemble"] = {"replicates": 0, "seed": 1}
    assert parse_config(doc).check("probe_t", None) == 0.3
