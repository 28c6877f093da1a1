import json

import pytest

from kinspec.reports import Certificate, certify_at_most, certify_finite
from kinspec.summary import (
    SCHEMA_VERSION,
    TAGS,
    anchor_for,
    check_entry,
    summary_document,
    write_csv,
    write_json,
)
from kinspec.utils import THREADS_ENV, format_float, parallel_map, split_list, thread_count


class TestCertificates:
    def test_at_most(self):
        assert certify_at_most("kernel.symmetry", 1e-14, 1e-12).passed
        assert not certify_at_most("kernel.symmetry", 1e-10, 1e-12).passed

    def test_non_finite_fails(self):
        cert = certify_at_most("kernel.symmetry", float("nan"), 1.0)
        assert not cert.passed
        assert cert.measured is None
        assert not certify_finite("discretize.mapping_bound", float("inf")).passed
        assert not certify_finite("discretize.mapping_bound", -1.0).passed

    def test_finite(self):
        cert = certify_finite("discretize.mapping_bound", 3.5)
        assert cert.passed
        assert cert.bound is None


class TestTags:
    def test_anchor_ignores_suffix(self):
        assert anchor_for("semigroup.decay_ratio[0.05,1]") == TAGS["semigroup.decay_ratio"]

    def test_unknown_tag(self):
        with pytest.raises(KeyError, match="not registered"):
            anchor_for("kernel.unknown")

    @pytest.mark.parametrize(
        "tag",
        [
            "kernel.weighted_integral[0.5]",
            "discretize.raw_invariant_defect",
            "discretize.hs_norm",
            "discretize.bhat1_margin",
            "nonlinear.linearization_vs_L",
        ],
    )
    def test_cross_checks_are_registered(self, tag):
        assert anchor_for(tag)

    def test_tags_are_namespaced(self):
        prefixes = {tag.split(".", 1)[0] for tag in TAGS}
        assert prefixes == {"kernel", "discretize", "spectral", "semigroup", "nonlinear"}


class TestSummaryDocument:
    def test_check_entry(self):
        entry = check_entry(Certificate(tag="kernel.symmetry[0.5]", measured=1e-15, bound=1e-12, passed=True))
        assert entry == {
            "tag": "kernel.symmetry[0.5]",
            "anchor": TAGS["kernel.symmetry"],
            "measured": 1e-15,
            "bound": 1e-12,
            "passed": True,
            "detail": "",
        }

    def test_non_finite_measured_becomes_null(self):
        entry = check_entry(Certificate(tag="kernel.symmetry", measured=float("inf"), passed=False))
        assert entry["measured"] is None

    def test_document(self):
        checks = [
            certify_at_most("kernel.symmetry", 0.0, 1e-12),
            certify_at_most("kernel.geometry", 1.0, 1e-12),
        ]
        doc = summary_document(
            "kernel-check", {"d": 3}, checks, ["b.csv", "a.csv"], extras={"nu0": float("nan"), "nodes": [1, 2.5]}
        )
        assert doc["schema_version"] == SCHEMA_VERSION == 1
        assert doc["command"] == "kernel-check"
        assert doc["passed"] is False
        assert doc["artifacts"] == ["a.csv", "b.csv"]
        assert doc["extras"] == {"nu0": None, "nodes": [1, 2.5]}
        assert [c["tag"] for c in doc["checks"]] == ["kernel.symmetry", "kernel.geometry"]

    def test_empty_document_passes(self):
        assert summary_document("assemble", {}, [], [])["passed"] is True


class TestWriters:
    def test_write_json_is_sorted(self, tmp_path):
        path = write_json(tmp_path / "out" / "summary.json", {"b": 1, "a": [0.5]})
        text = path.read_text(encoding="utf-8")
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")
        assert json.loads(text) == {"a": [0.5], "b": 1}

    def test_write_json_rejects_nan(self, tmp_path):
        with pytest.raises(ValueError):
            write_json(tmp_path / "summary.json", {"x": float("nan")})

    def test_write_csv(self, tmp_path, read_csv):
        rows = [{"r": 0.1, "ok": True, "label": "a"}, {"r": 1.0 / 3.0, "ok": False}]
        path = write_csv(tmp_path / "t.csv", ["r", "ok", "label"], rows)
        raw = path.read_bytes()
        assert raw.startswith(b"r,ok,label\r\n")
        assert raw.count(b"\r\n") == 3
        parsed = read_csv(path)
        assert parsed[0] == {"r": "0.10000000000000001", "ok": "true", "label": "a"}
        assert float(parsed[1]["r"]) == 1.0 / 3.0
        assert parsed[1]["label"] == ""


class TestUtils:
    @pytest.mark.parametrize(
        "value, expected",
        [
            (None, ""),
            (True, "true"),
            (False, "false"),
            (0.5, "0.5"),
            (0.1, "0.10000000000000001"),
            (7, "7"),
            (" x ", "x"),
        ],
    )
    def test_format_float(self, value, expected):
        assert format_float(value) == expected

    def test_split_list(self):
        assert split_list(" 0.1, ,0.2 ,") == ["0.1", "0.2"]

    @pytest.mark.parametrize("raw, expected", [("", 1), ("4", 4), ("0", 1), ("many", 1)])
    def test_thread_count(self, monkeypatch, raw, expected):
        monkeypatch.setenv(THREADS_ENV, raw)
        assert thread_count() == expected

    def test_thread_count_default(self, monkeypatch):
        monkeypatch.delenv(THREADS_ENV, raising=False)
        assert thread_count(default=3) == 3

    def test_parallel_map_keeps_order(self):
        def square(x):
            return x * x

        assert parallel_map(square, range(20), threads=4) == [x * x for x in range(20)]
        assert parallel_map(square, [3], threads=4) == [9]
