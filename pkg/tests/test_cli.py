import csv
import io
import json
import math

import numpy as np
import pytest

from compkernel import __version__, cli, fileio, sphere

SMALL_MC = ["--mc-samples", "20000", "--trunc-level", "8"]


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_phase_table_identity_spec(capsys):
    code, out, _ = run(["phase-table", "--activations", "coeffs:0,1"], capsys)
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 2
    for row in rows:
        assert float(row["mu"]) == 1.0 and float(row["mu_star"]) == 0.0 and float(row["a1_squared"]) == 1.0
        assert row["seed"] == "42" and row["version"] == __version__


def test_phase_table_relu_and_sigmoid(capsys):
    code, out, _ = run(["phase-table", "--activations", "relu", "sigmoid"], capsys)
    assert code == 0
    rows = {(r["activation"], r["centered"]): r for r in rows_of(out)}
    assert float(rows[("relu", "False")]["mu"]) == pytest.approx(0.95, abs=0.03)
    assert float(rows[("relu", "True")]["mu"]) == pytest.approx(1.39, abs=0.03)
    assert float(rows[("sigmoid", "False")]["xi"]) == pytest.approx(1.0, abs=0.005)
    assert float(rows[("sigmoid", "True")]["xi"]) == pytest.approx(0.0, abs=0.005)


def test_phase_table_offspring_law_single_row(capsys):
    code, out, _ = run(["phase-table", "--activations", "poisson(2)", "--format", "json"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert len(doc["rows"]) == 1
    row = doc["rows"][0]
    assert row["mu"] == pytest.approx(2.0, abs=1e-10)
    assert math.exp(2 * (row["xi"] - 1)) == pytest.approx(row["xi"], abs=1e-10)


def test_json_carries_reference_and_provenance(capsys):
    code, out, _ = run(["spectrum", "--activation", "point(1)", "--depth", "0", "--dim", "4", "--kmax", "3", "--format", "json"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["command"] == "spectrum"
    assert isinstance(doc["paper_ref"], str) and doc["paper_ref"]
    assert doc["provenance"] == {
        "seed": 42,
        "mc_samples": 10**6,
        "trunc_level": 20,
        "degree_cap": 512,
        "version": __version__,
    }
    lams = [r["lambda_k"] for r in doc["rows"]]
    assert lams[1] == pytest.approx(0.25, abs=1e-10)
    assert max(lams) == lams[1]
    assert doc["meta"]["trace_check"] == pytest.approx(1.0, abs=1e-6)


def test_spectrum_quadrature_column(capsys):
    code, out, _ = run(["spectrum", "--activation", "relu", "--centered", "--depth", "2", "--dim", "5", "--kmax", "6", *SMALL_MC], capsys)
    assert code == 0
    assert all(float(r["abs_diff"]) <= 1e-6 for r in rows_of(out))


def test_limits_rescaled_square_law(capsys):
    code, out, _ = run(
        ["limits", "--activation", "point(2)", "--mode", "rescaled", "--depths", "1,5,20", "--grid", "0:5:11", "--trials", "1000"],
        capsys,
    )
    assert code == 0
    for row in rows_of(out):
        assert float(row["value"]) == pytest.approx(math.exp(-float(row["t"])), abs=1e-10)


def test_limits_unscaled_centered_indicator(capsys):
    code, out, _ = run(
        ["limits", "--activation", "relu", "--centered", "--depths", "30", "--grid=-0.9:0.9:7", *SMALL_MC], capsys
    )
    assert code == 0
    rows = [r for r in rows_of(out) if r["L"] == "30"]
    assert len(rows) == 7
    # Convergence is slowest next to rho = 1.
    assert all(abs(float(r["value"])) < 2e-3 for r in rows)
    assert all(float(r["prediction"]) == 0.0 for r in rows)


def test_limits_rescaled_critical_law_tends_to_one(capsys):
    code, out, _ = run(
        ["limits", "--activation", "pgf:0.5,0,0.5", "--mode", "rescaled", "--depths", "10,1000", "--grid", "1,3", "--trials", "1000"],
        capsys,
    )
    assert code == 0
    rows = rows_of(out)
    deep = [float(r["value"]) for r in rows if r["L"] == "1000"]
    shallow = [float(r["value"]) for r in rows if r["L"] == "10"]
    assert all(v > 0.99 for v in deep)
    assert all(d > s for d, s in zip(deep, shallow))
    assert all(float(r["prediction"]) == 1.0 for r in rows)


def test_depth_small_correlation_inside_interval(capsys):
    code, out, _ = run(
        ["depth", "--activation", "gelu", "--centered", "--n", "200", "--d", "400", "--kappa", "0.2", "--format", "json"],
        capsys,
    )
    assert code == 0
    row = json.loads(out)["rows"][0]
    small = row["components"]["small_correlation_memorization"]
    assert small["lower"] <= row["exact"] <= small["upper"]
    assert row["lower"] <= row["exact"] <= row["upper"]


def test_depth_epsilon_above_rho_is_zero(capsys):
    code, out, _ = run(["depth", "--activation", "point(2)", "--n", "5", "--d", "10", "--epsilon", "0.999"], capsys)
    assert code == 0
    assert rows_of(out)[0]["exact"] == "0"


def test_depth_packing_reports_s_star(capsys):
    code, out, _ = run(
        ["depth", "--activation", "pgf:0,0.5,0.5", "--regime", "packing", "--d", "3", "--radius", "0.8",
         "--max-rejections", "2000", "--kappa", "0.05", "--format", "json"],
        capsys,
    )
    assert code == 0
    row = json.loads(out)["rows"][0]
    # (1 - G(s)) / (1 - s) = 1 + s / 2 reaches (1 + mu) / 2 = 1.25 at s = 1/2.
    assert row["components"]["large_correlation_memorization"]["s_star"] == pytest.approx(0.5, abs=1e-9)
    assert "packing" in row["dataset"]


def test_features_truncation_at_cap(tmp_path, capsys):
    ds = sphere.sample_uniform_sphere(6, 5, seed=0)
    path = tmp_path / "points.csv"
    ds.save(path)
    matrix = tmp_path / "phi.bin"
    code, out, _ = run(
        ["features", "--activation", "pgf:0,0.5,0.5", "--dataset", str(path), "--depth", "1", "--m", "500",
         "--trunc-level", "2", "--degree-cap", "2", "--matrix-out", str(matrix), "--format", "json"],
        capsys,
    )
    assert code == 0
    row = json.loads(out)["rows"][0]
    assert row["remainder_op_norm"] == pytest.approx(0.0, abs=1e-15)
    assert fileio.matrix_from_bytes(matrix.read_bytes()).shape == (6, 500)


@pytest.mark.parametrize("algorithm", ["1", "2", "2-noised"])
def test_features_algorithms(algorithm, capsys):
    code, out, _ = run(
        # A low-degree base keeps the Hermite features light-tailed.
        ["features", "--activation", "pgf:0,0.5,0.5", "--n", "8", "--d", "6", "--depth", "2", "--m", "20000",
         "--algorithm", algorithm, *SMALL_MC],
        capsys,
    )
    assert code == 0
    row = rows_of(out)[0]
    assert float(row["max_standardized_error"]) < 6


def test_condition_command(capsys):
    code, out, _ = run(
        ["condition", "--activations", "relu", "sigmoid", "--centered", "--n", "10", "--d", "20", "--depths", "1,4",
         "--m", "2000", *SMALL_MC],
        capsys,
    )
    assert code == 0
    rows = rows_of(out)
    assert [r["activation"] for r in rows] == ["relu", "relu", "sigmoid", "sigmoid"]
    assert all(float(r["condition_number"]) > 1 for r in rows)


def test_output_is_byte_identical_for_identical_config(tmp_path, capsys):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        argv = ["features", "--activation", "gelu", "--n", "6", "--d", "5", "--m", "3000", *SMALL_MC, "--out", str(p)]
        assert cli.main(argv) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert capsys.readouterr().out == ""


def test_validation_errors_exit_2(capsys):
    code, _, err = run(["phase-table", "--activations", "nosuchthing"], capsys)
    assert code == 2 and "error" in err
    code, _, _ = run(["depth", "--activation", "relu", "--n", "5", "--d", "5"], capsys)
    assert code == 2
    code, _, _ = run(["features", "--activation", "relu", "--dataset", "/nonexistent/file.csv"], capsys)
    assert code == 2


def test_unknown_flag_is_an_error(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["spectrum", "--dim", "3", "--bogus"])
    assert info.value.code == 2


def test_non_convergence_exits_3(capsys):
    code, _, err = run(["depth", "--activation", "poisson(2)", "--n", "5", "--d", "3", "--epsilon", "0.1", "--seed", "1"], capsys)
    assert code == 3
    assert "last_value" in err


def test_grid_parsing():
    np.testing.assert_allclose(cli.parse_grid("0:1:5"), [0, 0.25, 0.5, 0.75, 1])
    np.testing.assert_allclose(cli.parse_grid("0.1,0.5"), [0.1, 0.5])
    with pytest.raises(ValueError):
        cli.parse_grid("1:2")
