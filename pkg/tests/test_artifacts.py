import numpy as np
import pytest

from clusterssd import artifacts
from clusterssd.artifacts import (
    SchemaError,
    file_sha256,
    read_curve_csv,
    read_result_json,
    read_tau_csv,
    write_curve_csv,
    write_manifest,
    write_result_json,
    write_tau_csv,
)
from clusterssd.engine import TauSample
from clusterssd.numerics import expit


def sample(c=10, m=20, label="s", seed=3):
    g = np.random.default_rng(seed)
    lt = g.normal(0, 2, m)
    return TauSample(c=c, psi_label=label, tau=expit(lt), logit_tau=lt,
                     delta=g.normal(0.02, 0.01, m), master_seed=7)


class TestTauCsv:
    def test_roundtrip_exact(self, tmp_path):
        p = tmp_path / "taus.csv"
        s1, s2 = sample(10, label="a"), sample(14, label="b", seed=4)
        write_tau_csv(p, [s1, s2])
        back = read_tau_csv(p, master_seed=7)
        assert set(back) == {("a", 10), ("b", 14)}
        for s in (s1, s2):
            r = back[(s.psi_label, s.c)]
            assert np.array_equal(r.tau, s.tau)  # bitwise via repr round-trip
            assert np.array_equal(r.logit_tau, s.logit_tau)
            assert np.array_equal(r.delta, s.delta)

    def test_header_version_checked(self, tmp_path):
        p = tmp_path / "taus.csv"
        p.write_text("no header\n")
        with pytest.raises(SchemaError):
            read_tau_csv(p)

    def test_column_mismatch(self, tmp_path):
        p = tmp_path / "taus.csv"
        p.write_text("# clusterssd-v1 tau\nwrong,cols\n")
        with pytest.raises(SchemaError):
            read_tau_csv(p)

    def test_bad_row_reports_line(self, tmp_path):
        p = tmp_path / "taus.csv"
        write_tau_csv(p, [sample()])
        lines = p.read_text().splitlines()
        lines[5] = "short,row"
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError, match="line"):
            read_tau_csv(p)


class TestCurveCsv:
    def test_roundtrip(self, tmp_path):
        p = tmp_path / "curve.csv"
        rows = [("a", 100, 0.81234, 0.7, 0.9, "alg1"),
                ("a", 120, 0.9, None, None, "direct")]
        write_curve_csv(p, rows)
        back = read_curve_csv(p)
        assert back[0]["estimate"] == 0.81234
        assert back[1]["band_lo"] is None
        assert back[1]["source"] == "direct"

    def test_bad_source_rejected(self, tmp_path):
        p = tmp_path / "curve.csv"
        write_curve_csv(p, [("a", 100, 0.8, None, None, "alg1")])
        txt = p.read_text().replace("alg1", "oracle")
        p.write_text(txt)
        with pytest.raises(SchemaError, match="source"):
            read_curve_csv(p)


class TestResultJson:
    def test_roundtrip(self, tmp_path):
        p = tmp_path / "r.json"
        write_result_json(p, {"gamma": 0.97, "c2": 115})
        back = read_result_json(p)
        assert back["gamma"] == 0.97 and back["c2"] == 115

    def test_schema_tag_required(self, tmp_path):
        p = tmp_path / "r.json"
        p.write_text('{"gamma": 0.97}')
        with pytest.raises(SchemaError):
            read_result_json(p)


class TestManifest:
    def test_hashes_files(self, tmp_path):
        write_tau_csv(tmp_path / "taus.csv", [sample()])
        write_result_json(tmp_path / "result.json", {"x": 1})
        write_manifest(tmp_path, "abc123", 7, {"phase": 1.0},
                       ["taus.csv", "result.json"])
        import json
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["config_sha256"] == "abc123"
        assert man["master_seed"] == 7
        assert man["files"]["taus.csv"] == file_sha256(tmp_path / "taus.csv")


def test_atomic_write_no_tmp_left(tmp_path):
    artifacts.atomic_write_text(tmp_path / "f.txt", "hello")
    assert (tmp_path / "f.txt").read_text() == "hello"
    assert list(tmp_path.glob("*.tmp")) == []
