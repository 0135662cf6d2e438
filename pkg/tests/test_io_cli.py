import json
from pathlib import Path

import numpy as np
import pytest

from funlong.cli import main, validate_config
from funlong.core.errors import InvalidConfigError
from funlong.core.io import dataset_from_csv, dataset_to_csv
from funlong.dgp import simulate_discrete_regular, simulate_observational
from funlong.dgp.instances import survival_feedback, two_visit_feedback
from funlong.oracle.measure import enumerate_observational_measure


def test_dataset_roundtrip(tmp_path):
    ds = simulate_discrete_regular(two_visit_feedback(), 200, seed=3)
    dataset_to_csv(ds, tmp_path / "d.csv", tmp_path / "m.json")
    back = dataset_from_csv(tmp_path / "d.csv", tmp_path / "m.json")
    assert np.array_equal(ds.a, back.a)
    assert np.array_equal(ds.l, back.l)
    assert back.grid.points == ds.grid.points
    assert back.seed == ds.seed


def test_censored_dataset_roundtrip(tmp_path):
    ds = simulate_observational(survival_feedback(), 300, seed=9)
    dataset_to_csv(ds, tmp_path / "d.csv", tmp_path / "m.json")
    back = dataset_from_csv(tmp_path / "d.csv", tmp_path / "m.json")
    assert np.array_equal(ds.x, back.x)
    assert np.array_equal(ds.delta, back.delta)


def test_measure_dump(tmp_path):
    m = enumerate_observational_measure(two_visit_feedback())
    m.dump_csv(tmp_path / "measure.csv")
    import pandas as pd

    frame = pd.read_csv(tmp_path / "measure.csv")
    assert len(frame) == 16
    assert abs(frame["weight"].sum() - 1.0) <= 1e-12


def _write(path: Path, text: str) -> str:
    path.write_text(text)
    return str(path)


def test_validate_config_minimal_defaults(tmp_path):
    cfg = _write(tmp_path / "c.cfg", """
[run]
kind = study
[study.main]
study_kind = dr_grid
instance = two_visit_feedback
regime = two_visit_always
""")
    norm = validate_config(cfg)
    got = norm["studies"]["main"]
    assert got["n"] == 100_000 and got["replicates"] == 20
    assert got["ladder"] == (2, 4, 8, 16, 32, 64)


def test_validate_config_missing_regime(tmp_path):
    cfg = _write(tmp_path / "c.cfg", """
[run]
kind = study
[study.main]
study_kind = dr_grid
instance = two_visit_feedback
""")
    with pytest.raises(InvalidConfigError) as err:
        validate_config(cfg)
    assert any("regime" in f for f in err.value.fields)


def test_validate_config_bad_ladder(tmp_path):
    cfg = _write(tmp_path / "c.cfg", """
[run]
kind = study
[study.main]
study_kind = mesh_convergence
instance = ctmc_slow_feedback
regime = ctmc_all_on
ladder = 4,2
""")
    with pytest.raises(InvalidConfigError) as err:
        validate_config(cfg)
    assert "increase" in str(err.value)


def test_validate_config_unknown_key(tmp_path):
    cfg = _write(tmp_path / "c.cfg", """
[run]
kind = study
[study.main]
study_kind = dr_grid
instance = two_visit_feedback
regime = two_visit_always
bogus = 1
""")
    with pytest.raises(InvalidConfigError) as err:
        validate_config(cfg)
    assert any("bogus" in f for f in err.value.fields)


def test_cli_simulate_estimate_pipeline(tmp_path):
    sim_cfg = _write(tmp_path / "sim.cfg", """
[run]
kind = simulate
[simulate]
instance = two_visit_feedback
n = 5000
seed = 11
""")
    out1 = tmp_path / "data"
    assert main(["simulate", "--config", sim_cfg, "--out", str(out1)]) == 0
    assert (out1 / "data.csv").exists() and (out1 / "manifest.json").exists()

    est_cfg = _write(tmp_path / "est.cfg", """
[run]
kind = estimate
[estimate]
estimator = ipw
instance = two_visit_feedback
regime = two_visit_always
propensity = true
""")
    out2 = tmp_path / "est"
    assert main(["estimate", "--config", est_cfg, "--data", str(out1),
                 "--out", str(out2)]) == 0
    report = json.loads((out2 / "estimate.json").read_text())
    assert abs(report["estimate"] - 0.8) < 0.05


def test_cli_exit_codes(tmp_path):
    bad = _write(tmp_path / "bad.cfg", """
[run]
kind = study
[study.x]
study_kind = dr_grid
instance = two_visit_feedback
regime = two_visit_always
n = -4
""")
    assert main(["study", "--config", bad, "--out", str(tmp_path / "o")]) == 2
    pm = _write(tmp_path / "pm.cfg", """
[run]
kind = simulate
[simulate]
instance = diffusion_feedback
regime = constant_dose
n = 50
""")
    assert main(["simulate", "--config", pm, "--out", str(tmp_path / "o2")]) == 3
    with pytest.raises(SystemExit) as exc:
        main(["study", "--nope"])
    assert exc.value.code == 64


def test_cli_writes_only_inside_outdir(tmp_path):
    cfg = _write(tmp_path / "c.cfg", """
[run]
kind = study
[study.main]
study_kind = equivalence
instance = two_visit_feedback
regime = two_visit_always
n = 5000
seed = 3
""")
    out = tmp_path / "only_here"
    before = set(p for p in tmp_path.rglob("*"))
    assert main(["study", "--config", cfg, "--out", str(out)]) == 0
    created = set(tmp_path.rglob("*")) - before
    assert created and all(str(p).startswith(str(out)) for p in created)


def test_cli_manifest_rerun_bitwise(tmp_path):
    cfg = _write(tmp_path / "c.cfg", """
[run]
kind = study
[study.main]
study_kind = ee_unbiasedness
instance = two_visit_feedback
regime = two_visit_always
n = 20000
seed = 99
""")
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["study", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["study", "--config", str(out1 / "resolved.cfg"), "--out", str(out2)]) == 0
    assert (out1 / "report.csv").read_bytes() == (out2 / "report.csv").read_bytes()


def test_cli_env_default_out(tmp_path, monkeypatch):
    cfg = _write(tmp_path / "c.cfg", """
[run]
kind = simulate
[simulate]
instance = coin_flip
n = 50
seed = 1
""")
    monkeypatch.setenv("FUNLONG_OUT", str(tmp_path / "envout"))
    assert main(["simulate", "--config", cfg]) == 0
    assert (tmp_path / "envout" / "data.csv").exists()


def test_cli_study_trajectory_dump(tmp_path):
    cfg = _write(tmp_path / "c.cfg", """
[run]
kind = study
[study.main]
study_kind = equivalence
instance = two_visit_feedback
regime = two_visit_always
n = 4000
seed = 3
option.dump_trajectories = 50
""")
    out = tmp_path / "dump"
    assert main(["study", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "trajectories.csv").exists()
