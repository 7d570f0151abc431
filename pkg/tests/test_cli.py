import json
import subprocess
import sys

import numpy as np
import pytest

from isrs_nli.cli import main
from isrs_nli.config import ConfigError, bundled_scenarios, load_scenario, scenario_from_dict
from isrs_nli.report import compare, validate_summary

FIBER = {"alpha_db_per_km": 0.2, "gamma_per_w_per_km": 1.2, "dispersion_ps_per_nm_per_km": 18.0,
         "slope_ps_per_nm2_per_km": 0.067, "cr_per_w_per_km_per_thz": 0.0236, "ref_wavelength_nm": 1570.0}


def _scenario(tmp_path, **over):
    doc = {"name": "t", "fiber": FIBER, "plan": {"n_ch": 5, "baud_gbd": 40, "power_dbm_per_ch": 2},
           "link": {"n_spans": 2, "span_length_km": 60}, "models": ["isrs-gn-cf", "eff-attn-cf"]}
    doc.update(over)
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    return path


def test_bundled_scenarios_load():
    names = bundled_scenarios()
    assert {"desk_gn_5x40", "wideband_15x100", "ssfm_desk_5x10", "ssfm_desk_isrs", "cl_band_119x85"} <= set(names)
    from importlib import resources
    for n in names:
        sc = load_scenario(resources.files("isrs_nli") / "scenarios" / f"{n}.json")
        assert sc.name == n


def test_units_converted(tmp_path):
    sc = load_scenario(_scenario(tmp_path))
    assert sc.plan.powers[0] == pytest.approx(10 ** 0.2 * 1e-3)
    assert sc.link.spans[1].length == 60e3
    assert sc.link.fiber.cr == pytest.approx(0.0236e-15)


def test_explicit_channel_list_and_spans():
    doc = {"fiber": FIBER,
           "plan": {"channels": [{"frequency_thz": -0.1, "bandwidth_ghz": 50, "power_dbm": 0},
                                 {"frequency_thz": 0.1, "bandwidth_ghz": 50, "power_dbm": 1}]},
           "link": {"spans": [{"length_km": 50}, {"length_km": 70, "fiber": {"alpha_db_per_km": 0.17},
                                                  "launch_power_dbm": [0, 0]}]}}
    sc = scenario_from_dict(doc)
    assert sc.plan.frequencies == pytest.approx([-1e11, 1e11])
    assert sc.link.spans[1].fiber.alpha < sc.link.spans[0].fiber.alpha
    bad = dict(doc, link={"spans": [{"length_km": 50, "launch_power_dbm": [0]}]})
    with pytest.raises(ConfigError, match="launch_power_dbm"):
        scenario_from_dict(bad)


@pytest.mark.parametrize("over,where", [
    ({"plan": {"n_ch": 0, "baud_gbd": 40, "power_dbm_per_ch": 0}}, "plan/n_ch"),
    ({"fiber": dict(FIBER, alpha_db_per_km=-1)}, "fiber/alpha_db_per_km"),
    ({"fiber": dict(FIBER, alpha_dbkm=0.2)}, "fiber"),
    ({"models": []}, "models"),
    ({"channels": [9]}, "channels"),
])
def test_config_errors_name_the_key(tmp_path, capsys, over, where):
    rc = main(["eta", str(_scenario(tmp_path, **over)), "-o", str(tmp_path / "o")])
    assert rc == 2
    assert where in capsys.readouterr().err


def test_unreadable_inputs(tmp_path, capsys):
    assert main(["eta", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "x.json").write_text("{not json")
    assert main(["eta", str(tmp_path / "x.json")]) == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_long_running_needs_opt_in(tmp_path):
    assert main(["ssfm", "cl_band_119x85", "-o", str(tmp_path)]) == 2


def test_model_failure_exit_code(tmp_path):
    # the simulator needs one common symbol rate; the closed form still runs
    plan = {"channels": [{"frequency_thz": -0.05, "bandwidth_ghz": 40, "power_dbm": 0},
                         {"frequency_thz": 0.05, "bandwidth_ghz": 60, "power_dbm": 0}]}
    path = _scenario(tmp_path, plan=plan, models=["isrs-gn-cf", "ssfm"])
    out = tmp_path / "o"
    assert main(["compare", str(path), "-o", str(out)]) == 3
    doc = json.loads((out / "summary.json").read_text())
    assert doc["failures"][0]["model"] == "ssfm"
    assert "isrs-gn-cf" in (out / "eta.csv").read_text()


def test_eta_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["eta", str(_scenario(tmp_path)), "-o", str(out)]) == 0
    lines = (out / "eta_isrs-gn-cf.csv").read_text().splitlines()
    assert lines[0] == "channel,frequency_thz,eta_db,eta_per_w2,error_per_w2"
    assert len(lines) == 6
    validate_summary(json.loads((out / "summary.json").read_text()))


def test_single_model_compare_has_only_self_row(tmp_path):
    out = tmp_path / "o"
    assert main(["compare", str(_scenario(tmp_path)), "-m", "isrs-gn-cf", "-o", str(out)]) == 0
    doc = json.loads((out / "summary.json").read_text())
    assert doc["reference_model"] == "isrs-gn-cf"
    rows = (out / "deviation.csv").read_text().splitlines()[1:]
    assert len(rows) == 5 and all(r.endswith(",0.000000") for r in rows)


def test_reference_falls_back_to_first_model(tmp_path):
    rep = compare(load_scenario(_scenario(tmp_path)))
    assert rep.reference_model == "isrs-gn-cf"
    assert np.all(rep.deviation_db("isrs-gn-cf") == 0)


@pytest.mark.parametrize("argv", [
    ["compare"], ["sweep", "--powers", "0", "6"], ["profile"], ["eta"],
])
def test_outputs_byte_identical(tmp_path, argv):
    path = _scenario(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([argv[0], str(path), "-o", str(a)] + argv[1:]) == 0
    assert main([argv[0], str(path), "-o", str(b)] + argv[1:]) == 0
    files = sorted(p.name for p in a.iterdir())
    assert files and files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_sweep_columns(tmp_path):
    out = tmp_path / "o"
    assert main(["sweep", str(_scenario(tmp_path)), "--powers", "0", "10", "-o", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "power_dbm_per_ch,power_transfer_db,model,channel,frequency_thz,eta_db,deviation_db"
    assert len(lines) == 1 + 2 * 2 * 3
    doc = json.loads((out / "summary.json").read_text())
    assert doc["power_transfer_db"][1] > doc["power_transfer_db"][0] > 0


def test_sweep_needs_powers(tmp_path):
    assert main(["sweep", str(_scenario(tmp_path)), "-o", str(tmp_path / "o")]) == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "isrs_nli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "isrs-nli" in r.stdout
