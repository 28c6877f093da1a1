import pytest

from kinspec.cli import DESCRIPTIONS, build_parser, main, run
from kinspec.commands import COMMANDS
from kinspec.commands.xspace import EXPONENT_TOL


def _config(tmp_path, *lines):
    path = tmp_path / "run.cfg"
    body = [
        "resolution = 6",
        f"cache_dir = {tmp_path / 'cache'}",
        f"out = {tmp_path / 'out'}",
        *lines,
    ]
    path.write_text("\n".join(body) + "\n", encoding="utf-8")
    return path


class TestParser:
    def test_every_command_is_registered(self):
        assert set(DESCRIPTIONS) == set(COMMANDS)

    def test_help(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        assert "kernel-check" in capsys.readouterr().out

    def test_no_command_prints_help(self, capsys):
        assert main([]) == 0
        assert "usage: kinspec" in capsys.readouterr().out

    def test_config_is_required(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["assemble"])
        assert exc.value.code == 2


class TestExitCodes:
    def test_missing_config(self, tmp_path):
        assert run("assemble", tmp_path / "absent.cfg") == 2

    def test_bad_config(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("resolution = abc\n", encoding="utf-8")
        assert run("assemble", path, out=tmp_path / "out") == 2
        assert not (tmp_path / "out").exists()

    def test_command_mismatch(self, tmp_path):
        path = _config(tmp_path, "command = solve")
        assert main(["assemble", "--config", str(path)]) == 2


@pytest.mark.integration
class TestCommands:
    def test_assemble_uses_the_cache(self, tmp_path, read_json):
        path = _config(tmp_path)
        first = run("assemble", path, out=tmp_path / "first")
        second = run("assemble", path, out=tmp_path / "second")
        a = read_json(tmp_path / "first" / "summary.json")
        b = read_json(tmp_path / "second" / "summary.json")
        assert first == (0 if a["passed"] else 5)
        assert second == first
        assert a["schema_version"] == 1
        assert a["command"] == "assemble"
        assert a["extras"]["cached"] is False
        assert b["extras"]["cached"] is True
        assert a["extras"]["operator_hash"] == b["extras"]["operator_hash"]
        assert a["extras"]["nodes"] == 216
        assert a["artifacts"] == ["nu.csv"]

    def test_no_cache_writes_nothing(self, tmp_path):
        path = _config(tmp_path)
        run("assemble", path, use_cache=False)
        assert (tmp_path / "out" / "summary.json").exists()
        assert not (tmp_path / "cache").exists()

    def test_kernel_check(self, tmp_path, read_csv, read_json):
        path = _config(tmp_path, "n_pairs = 50", "appendix = false", "gammas = 0.25, 0.5", "mc_samples = 2000")
        code = main(["kernel-check", "--config", str(path)])
        doc = read_json(tmp_path / "out" / "summary.json")
        assert code == (0 if doc["passed"] else 5)
        assert doc["artifacts"] == ["nu_band.csv"]
        assert set(doc["extras"]["nu_band"]) == {"0.25", "0.5"}
        tags = {c["tag"] for c in doc["checks"]}
        assert {"kernel.nu_band[0.25]", "kernel.weighted_integral[0.25]", "kernel.weighted_integral[0.5]"} <= tags
        rows = read_csv(tmp_path / "out" / "nu_band.csv")
        assert len(rows) == 2 * 17
        assert list(rows[0]) == ["gamma", "radius", "nu", "scaled"]
        assert all(c["anchor"] for c in doc["checks"])

    @pytest.mark.slow
    def test_assemble_with_hs_check(self, tmp_path, read_json):
        path = _config(tmp_path, "hs_eps = 0.5", "hs_radius = 1.0", "mc_samples = 20000")
        run("assemble", path)
        doc = read_json(tmp_path / "out" / "summary.json")
        (hs,) = [c for c in doc["checks"] if c["tag"] == "discretize.hs_norm"]
        assert hs["passed"], hs["detail"]

    @pytest.mark.slow
    def test_xspace_decay_exponent(self, tmp_path, read_csv, read_json):
        path = _config(tmp_path)
        code = run("xspace", path)
        doc = read_json(tmp_path / "out" / "summary.json")
        (cert,) = doc["checks"]
        assert cert["tag"] == "semigroup.xspace_decay"
        assert cert["passed"], cert["detail"]
        assert code == 0
        assert doc["extras"]["fit"]["exponent"] == pytest.approx(0.75, abs=EXPONENT_TOL)
        rows = read_csv(tmp_path / "out" / "xspace.csv")
        assert len(rows) == 30
        assert list(rows[0]) == ["t", "norm", "coarse_norm", "running_exponent"]
        assert float(rows[-1]["norm"]) < float(rows[0]["norm"])
