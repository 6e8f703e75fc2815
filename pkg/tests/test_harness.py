"""Config parsing, binary field files, command drivers, CLI exit codes."""
import re
import struct

import numpy as np
import pytest

from rheoflow.errors import ConfigError, FieldFormatError
from rheoflow.harness import commands, fieldio
from rheoflow.harness.cli import main
from rheoflow.harness.config import load_config, parse_config_text

TINY = """\
# short decaying single-mode run
kmax               = 1
density_resolution = 8
dt                 = 1e-3
t_final            = 0.02
alpha              = 1e-3
gamma              = 2.0
potential  = power_law
nu         = 0.2    # quadratic potential, reference viscosity 0.1
p          = 2.0
rho_min    = 0.5
rho_max    = 2.0
u0   = single_mode
u0_k = 1,0,0
u0_w = 0,1,0
rho0       = constant
rho0_value = 1.0
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# --- config text -------------------------------------------------------------


def test_parse_full_config():
    config = parse_config_text(TINY)
    assert config.kmax == 1
    assert config.density_resolution == 8
    assert config.dt == 1e-3
    assert config.t_final == 0.02
    assert config.alpha == 1e-3
    assert config.gamma == 2.0
    assert config.potential.kind == "power_law"
    assert config.potential.nu == 0.2
    assert config.potential.p == 2.0
    assert (config.rho_min, config.rho_max) == (0.5, 2.0)
    assert config.u0.kind == "single_mode"
    assert config.u0.k == (1, 0, 0)
    assert config.u0.w == (0.0, 1.0, 0.0)
    assert config.rho0.kind == "constant"
    assert config.rho0.value == 1.0
    # optional keys keep their solver defaults
    assert config.picard_tol == 1e-10
    assert config.picard_max_iter == 50
    assert config.snapshot_every == 0
    assert config.energy_excess_tol == 1e-3
    assert config.perturb_delta == 0.0


def test_defaults_are_rest_and_midpoint_density():
    text = "\n".join(line for line in TINY.splitlines()
                     if not line.startswith(("u0", "rho0")))
    config = parse_config_text(text)
    assert config.u0.kind == "rest"
    assert config.rho0.kind == "constant"
    assert config.rho0.value == 1.25  # midpoint of [0.5, 2.0]


def test_duplicate_key_reports_both_lines():
    text = TINY + "kmax = 2\n"
    lineno = len(TINY.splitlines()) + 1
    with pytest.raises(ConfigError,
                       match=rf":{lineno}: duplicate key 'kmax' "
                             rf"\(first assigned on line 2\)"):
        parse_config_text(text)


def test_unknown_key_names_its_line():
    text = TINY + "wibble = 3\n"
    lineno = len(TINY.splitlines()) + 1
    with pytest.raises(ConfigError, match=rf":{lineno}: unknown key 'wibble'"):
        parse_config_text(text)


def test_missing_required_key():
    text = "\n".join(line for line in TINY.splitlines()
                     if not line.startswith("dt"))
    with pytest.raises(ConfigError, match="missing required key 'dt'"):
        parse_config_text(text)


def test_malformed_lines():
    with pytest.raises(ConfigError, match=r"kmax\.cfg:1: expected `key = value`"):
        parse_config_text("kmax 1\n", source="kmax.cfg")
    with pytest.raises(ConfigError, match=":1: empty key or value"):
        parse_config_text("kmax =\n")


def test_unparsable_values_name_key_and_kind():
    with pytest.raises(ConfigError,
                       match="key 'kmax': cannot parse 'one' as an integer"):
        parse_config_text(TINY.replace("kmax               = 1",
                                       "kmax               = one"))
    with pytest.raises(ConfigError,
                       match="expected three comma-separated integers"):
        parse_config_text(TINY.replace("u0_k = 1,0,0", "u0_k = 1,0"))
    with pytest.raises(ConfigError, match="'herschel' is not one of"):
        parse_config_text(TINY.replace("potential  = power_law",
                                       "potential  = herschel"))


def test_range_violations_carry_the_source_name():
    bad = TINY.replace("gamma              = 2.0", "gamma              = 1.0")
    with pytest.raises(ConfigError, match="decay.cfg: gamma must exceed 1"):
        parse_config_text(bad, source="decay.cfg")


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(tmp_path / "absent.cfg")


# --- field files -------------------------------------------------------------


def test_scalar_field_roundtrip_is_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    values = rng.standard_normal((5, 4, 3))
    path = tmp_path / "rho.fld"
    fieldio.write_field(path, values)
    back = fieldio.read_field(path)
    assert back.shape == (5, 4, 3)
    assert back.tobytes() == values.tobytes()


def test_vector_field_roundtrip_keeps_component_axis(tmp_path):
    rng = np.random.default_rng(1)
    values = rng.standard_normal((2, 4, 4, 4))
    path = tmp_path / "u.fld"
    fieldio.write_field(path, values)
    back = fieldio.read_field(path)
    assert back.shape == (2, 4, 4, 4)
    np.testing.assert_array_equal(back, values)


def test_field_format_rejections(tmp_path):
    path = tmp_path / "bad.fld"

    path.write_bytes(b"TRHEO")
    with pytest.raises(FieldFormatError, match="shorter than the header"):
        fieldio.read_field(path)

    path.write_bytes(struct.pack("<8sIIII", b"NOTAFILE", 1, 1, 1, 1) + b"\0" * 8)
    with pytest.raises(FieldFormatError, match="bad magic"):
        fieldio.read_field(path)

    path.write_bytes(struct.pack("<8sIIII", fieldio.MAGIC, 0, 1, 1, 1))
    with pytest.raises(FieldFormatError, match="degenerate dimensions"):
        fieldio.read_field(path)

    path.write_bytes(struct.pack("<8sIIII", fieldio.MAGIC, 2, 2, 2, 1)
                     + b"\0" * (8 * 8 - 8))
    with pytest.raises(FieldFormatError, match="payload size"):
        fieldio.read_field(path)

    with pytest.raises(FieldFormatError, match="expected a"):
        fieldio.write_field(path, np.zeros((4, 4)))


# --- simulate ----------------------------------------------------------------


def test_simulate_artifacts_and_bitwise_rerun(tmp_path):
    cfg = write_cfg(tmp_path, TINY + "snapshot_every = 5\n")
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    manifest = commands.cmd_simulate(cfg, str(out1))
    assert manifest.all_passed
    assert manifest.checks == {"density_bounds": True,
                               "dissipation_nonneg": True,
                               "energy_excess": True}
    # 21 states at dt=1e-3, snapshots every 5 plus the final state
    assert manifest.outputs == ["ledger.csv", "rho_000000.fld",
                                "rho_000005.fld", "rho_000010.fld",
                                "rho_000015.fld", "rho_000020.fld"]
    ledger = (out1 / "ledger.csv").read_text().splitlines()
    assert ledger[0] == "t,kinetic,gamma_term,dissipation,defect,total,residual"
    assert len(ledger) == 22
    text = (out1 / "manifest.txt").read_text()
    assert "passed = yes" in text

    # unit initial density survives the format roundtrip exactly
    rho0 = fieldio.read_field(out1 / "rho_000000.fld")
    np.testing.assert_array_equal(rho0, np.ones((8, 8, 8)))

    # a rerun reproduces every artifact byte for byte (manifest has clocks)
    commands.cmd_simulate(cfg, str(out2))
    for name in manifest.outputs:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


# --- relative energy ---------------------------------------------------------


def test_relative_energy_identical_data(tmp_path):
    cfg = write_cfg(tmp_path, TINY)
    manifest = commands.cmd_relative_energy(cfg, str(tmp_path / "out"))
    assert manifest.checks == {"identical_data_small": True}
    # the distance to the reference flow is pure discretization error; the
    # envelope margin is reported but not gated on this path
    assert float(manifest.notes["e_rel_max"]) <= 1e-6
    assert "worst_envelope_margin" in manifest.notes


def test_relative_energy_perturbed_start(tmp_path):
    cfg = write_cfg(tmp_path, TINY + "perturb_delta = 1e-2\nperturb_index = 0\n")
    manifest = commands.cmd_relative_energy(cfg, str(tmp_path / "out"))
    assert manifest.checks == {"gronwall_envelope": True,
                               "perturbed_start_value": True}
    assert abs(float(manifest.notes["e_rel_initial"]) - 0.5e-4) <= 1e-12
    assert float(manifest.notes["c_max"]) == pytest.approx(
        10.0 * 2.0 * np.sqrt(2.0) * np.pi, rel=1e-12)


def test_relative_energy_rejects_non_reference_configs(tmp_path):
    p3 = write_cfg(tmp_path, TINY.replace("p          = 2.0",
                                          "p          = 3.0"), "p3.cfg")
    with pytest.raises(ConfigError, match="power_law with p = 2"):
        commands.cmd_relative_energy(p3, str(tmp_path / "o1"))
    rest = write_cfg(tmp_path,
                     "\n".join(line for line in TINY.splitlines()
                               if not line.startswith("u0")), "rest.cfg")
    with pytest.raises(ConfigError, match="u0 = single_mode"):
        commands.cmd_relative_energy(rest, str(tmp_path / "o2"))


# --- defect study and convergence --------------------------------------------


def test_defect_study_small_ladder(tmp_path):
    manifest = commands.cmd_defect_study(str(tmp_path), n_values=(4, 8))
    assert manifest.all_passed
    # cells aligned with whole oscillation periods: the limit is hit exactly
    assert float(manifest.notes["final_distance"]) <= 1e-12
    assert float(manifest.notes["final_defect"]) == pytest.approx(0.5, rel=1e-12)
    header = (tmp_path / "defect.csv").read_text().splitlines()[0]
    assert header.startswith("n,distance_to_limit,trace,defect")


def test_convergence_ladders(tmp_path):
    cfg = write_cfg(tmp_path, TINY.replace("t_final            = 0.02",
                                           "t_final            = 0.01"))
    manifest = commands.cmd_convergence(cfg, str(tmp_path / "out"))
    assert manifest.all_passed
    assert float(manifest.notes["dt_residual_order"]) >= 1.0
    assert (tmp_path / "out" / "convergence.csv").exists()


# --- CLI exit codes ----------------------------------------------------------


def test_cli_verify_basis_stdout_and_exit(capsys):
    assert main(["verify", "basis"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines
    for line in lines:
        assert re.match(r"^PASS basis\.\w+ margin=-?\d\.\d{3}e[+-]\d{2} ", line)


def test_cli_usage_errors_exit_2(tmp_path, capsys):
    assert main(["verify", "nope"]) == 2
    assert capsys.readouterr().err.startswith("config-error: unknown suite")

    absent = str(tmp_path / "absent.cfg")
    assert main(["simulate", "--config", absent, "--out",
                 str(tmp_path / "o1")]) == 2
    assert "cannot read config" in capsys.readouterr().err

    bad = write_cfg(tmp_path, TINY.replace("gamma              = 2.0",
                                           "gamma              = 1.0"),
                    "bad.cfg")
    assert main(["simulate", "--config", bad, "--out",
                 str(tmp_path / "o2")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("config-error:") and "gamma" in err


def test_cli_check_failure_exits_1(tmp_path, capsys):
    cfg = write_cfg(tmp_path, TINY + "energy_excess_tol = 1e-30\n")
    assert main(["simulate", "--config", cfg, "--out",
                 str(tmp_path / "out")]) == 1
    assert capsys.readouterr().err.strip() == "check-failure: energy_excess"


def test_cli_numerical_failure_exits_3(tmp_path, capsys):
    cfg = write_cfg(tmp_path,
                    TINY + "picard_tol = 1e-16\npicard_max_iter = 1\n")
    assert main(["simulate", "--config", cfg, "--out",
                 str(tmp_path / "out")]) == 3
    err = capsys.readouterr().err
    assert err.startswith("numerical-failure:") and "did not converge" in err


def test_cli_defect_study_flag_validation(tmp_path, capsys):
    assert main(["defect-study", "--out", str(tmp_path / "o1"),
                 "--n-list", "4,8"]) == 0
    assert main(["defect-study", "--out", str(tmp_path / "o2"),
                 "--w", "1,0,0"]) == 2
    assert "orthogonal" in capsys.readouterr().err
    assert main(["defect-study", "--out", str(tmp_path / "o3"),
                 "--n-list", "8,4"]) == 2
    assert "strictly increasing" in capsys.readouterr().err
    assert main(["defect-study", "--out", str(tmp_path / "o4"),
                 "--w", "0,1"]) == 2
    assert "three comma-separated" in capsys.readouterr().err
