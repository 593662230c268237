import json

import numpy as np
import pytest

from generators import random_mixed
from reduced_purities import io as fio
from reduced_purities.cli import main
from reduced_purities.densmat import PureState, from_pure
from reduced_purities.fock import SlaterDeterminant
from reduced_purities.rdm import build_rdm
from reduced_purities.vibronic.experiments import RunConfig

G = SlaterDeterminant.from_string("11001100")
S1 = SlaterDeterminant.from_string("10101100")


def type1():
    return from_pure(PureState((G, S1), np.sqrt([0.75, 0.25])))


@pytest.fixture
def type1_file(tmp_path):
    path = tmp_path / "type1.json"
    fio.write_density(path, type1())
    return path


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_density_roundtrip(tmp_path):
    rho = random_mixed(np.random.default_rng(1))
    path = tmp_path / "rho.json"
    fio.write_density(path, rho)
    back, basis = fio.read_density(path)
    assert back.dets == rho.dets
    np.testing.assert_array_equal(back.coeffs, rho.coeffs)
    assert basis.K == rho.K


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d.pop("coefficients"), "coefficients"),
    (lambda d: d.update(determinants=["1100110"]), "determinants[0]"),
    (lambda d: d["coefficients"][0].pop(), "coefficients"),
    (lambda d: d["coefficients"][0].__setitem__(0, {"re": "x"}), "coefficients[0][0]"),
    (lambda d: d.update(basis={"orbitals": 3}), "basis.orbitals"),
])
def test_schema_errors_name_the_field(mutate, field):
    doc = fio.density_to_json(type1())
    mutate(doc)
    with pytest.raises(fio.SchemaError) as info:
        fio.density_from_json(doc)
    assert info.value.field == field


def test_non_hermitian_rejected():
    doc = fio.density_to_json(type1())
    doc["coefficients"][0][1] = {"re": 0.0, "im": 1.0}
    with pytest.raises(fio.SchemaError, match="coefficients"):
        fio.density_from_json(doc)


def test_rdm_roundtrip():
    g = build_rdm(type1(), 2)
    back = fio.rdm_from_json(json.loads(json.dumps(fio.rdm_to_json(g))))
    np.testing.assert_array_equal(back.elements, g.elements)
    lines = fio.rdm_to_csv(g).splitlines()
    assert len(lines) == 1 + len(g.tuples) == 29


def test_timeseries_roundtrip(tmp_path):
    t = np.arange(4.0)
    pops = np.tile([1, 0.75, 0.25, 0, 1, 1, 0, 0], (4, 1))
    P1 = np.array([4.0, 3.9, 3.8, 3.7])
    P2 = P1 + 2
    path = tmp_path / "ts.csv"
    fio.write_timeseries(path, t, pops, P1, P2, labels=[f"{k}u" for k in range(1, 5)] + [f"{k}d" for k in range(1, 5)])
    obs = fio.read_timeseries(path)
    assert obs.N == 4
    np.testing.assert_array_equal(obs.times, t)
    np.testing.assert_array_equal(obs.P1, P1)
    np.testing.assert_array_equal(obs.orbital_populations, pops)
    assert path.read_text().splitlines()[1].startswith("t_fs,pop_1u")


def test_timeseries_version_checked(tmp_path):
    path = tmp_path / "ts.csv"
    path.write_text("t_fs,P1\n0,4\n")
    with pytest.raises(fio.SchemaError) as info:
        fio.read_timeseries(path)
    assert info.value.field == "header"


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\npreset = type2\nn_traj = 7  # few\ncompensate = no\nphoton_energy = none\n")
    cfg = fio.read_config(path, RunConfig)
    assert cfg == {"preset": "type2", "n_traj": 7, "compensate": False, "photon_energy": None}
    path.write_text("bogus = 1\n")
    with pytest.raises(fio.SchemaError) as info:
        fio.read_config(path, RunConfig)
    assert info.value.field == "bogus"


def test_manifest_hash_is_order_independent():
    a = fio.manifest("simulate", {"x": 1, "y": 2}, {})
    b = fio.manifest("simulate", {"y": 2, "x": 1}, {})
    assert a["config_sha256"] == b["config_sha256"]
    assert a["config_sha256"] != fio.manifest("simulate", {"x": 1, "y": 3}, {})["config_sha256"]


def test_cli_purity(capsys, type1_file):
    code, out, _ = run_cli(capsys, "purity", type1_file)
    assert code == 0
    reports = {r["r"]: r for r in json.loads(out)["reports"]}
    assert reports[1]["value"] == pytest.approx(4.0)
    assert reports[2]["value"] == pytest.approx(6.0)


def test_cli_purity_check(capsys, tmp_path):
    path = tmp_path / "rho.json"
    fio.write_density(path, random_mixed(np.random.default_rng(3)))
    code, out, _ = run_cli(capsys, "purity", path, "--r", "1,2,3", "--check")
    assert code == 0
    assert json.loads(out)["max_deviation"] < 1e-10


def test_cli_dephase_then_purity(capsys, tmp_path, type1_file):
    out_path = tmp_path / "deph.json"
    assert run_cli(capsys, "dephase", type1_file, "--all", "-o", out_path)[0] == 0
    code, out, _ = run_cli(capsys, "purity", out_path)
    reports = {r["r"]: r for r in json.loads(out)["reports"]}
    assert reports[1]["value"] == pytest.approx(3.625)
    assert reports[2]["value"] == pytest.approx(4.875)
    assert run_cli(capsys, "dephase", type1_file, "--pairs", "0-5")[0] == 2


def test_cli_bad_input_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"basis": {"orbitals": []}}))
    code, _, err = run_cli(capsys, "purity", bad)
    assert code == 2 and "determinants" in err
    code, _, err = run_cli(capsys, "purity", tmp_path / "missing.json")
    assert code == 2


def test_cli_limits(capsys):
    code, out, _ = run_cli(capsys, "limits", "--N", 4, "--populations", "1/2,1/2", "--r", 1)
    assert code == 0
    lim = json.loads(out)["limits"][0]
    assert lim["exact"]["delta1"] == "1/2"
    assert lim["exact"]["fully_incoherent_value"] == "7/2"
    assert lim["exact"]["absolute_min"] == "2"


def test_cli_reconstruct_synthetic(capsys, tmp_path):
    # incoherent three-determinant triad written as a time series
    from reduced_purities.densmat import DensityMatrixExpansion
    from reduced_purities.reconstruct import observe
    dets = tuple(SlaterDeterminant.from_string(s) for s in ("11001100", "10101100", "11001010"))
    times = np.linspace(0, 100, 11)
    rhos = [DensityMatrixExpansion(dets, np.diag([1 - 0.004 * t, 0.002 * t, 0.002 * t])) for t in times]
    obs = observe(times, rhos)
    path = tmp_path / "ts.csv"
    fio.write_timeseries(path, obs.times, obs.orbital_populations, obs.P1, obs.P2)
    code, out, _ = run_cli(capsys, "reconstruct", path, "--tol", "1e-6", "--fit-tol", "1e-6")
    assert code == 0
    assert json.loads(out)["survivors"] == ["M5"]
    assert run_cli(capsys, "reconstruct", path, "--models", "M9")[0] == 2


@pytest.mark.slow
def test_cli_simulate_and_rerun(capsys, tmp_path):
    args = ["simulate", "--preset", "type2", "--n-traj", 6, "--t-final", 20, "--output-every", 5,
            "--n-bootstrap", 5, "--seed", 3]
    first = tmp_path / "a"
    assert run_cli(capsys, *args, "-d", first, "--save-rdm")[0] == 0
    man = json.loads((first / "manifest.json").read_text())
    assert man["config"]["n_traj"] == 6 and man["outputs"]["rdm"] == "rdm.npz"
    obs = fio.read_timeseries(first / "timeseries.csv")
    assert obs.P1[0] == pytest.approx(3.25)
    assert np.all(np.abs(obs.P1 - 3.25) < 0.05)
    second = tmp_path / "b"
    assert run_cli(capsys, "simulate", "--from-manifest", first / "manifest.json", "-d", second)[0] == 0
    assert (first / "timeseries.csv").read_bytes() == (second / "timeseries.csv").read_bytes()
    code, out, _ = run_cli(capsys, "reconstruct", first / "timeseries.csv", "--models", "M1,M2")
    assert code == 0 and [v["name"] for v in json.loads(out)["models"]] == ["M1", "M2"]
