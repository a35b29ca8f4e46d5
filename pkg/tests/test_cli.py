"""End-to-end smoke for every subcommand on small fixture corpora, plus the
configuration precedence matrix."""

from __future__ import annotations

import datetime as dt
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from apofasis.cli import main
from apofasis.testing import StubDiavgeiaServer, build_synthetic_corpus, synthetic_record
from apofasis.corpus import StoredDocument

REPO_ROOT = Path(__file__).resolve().parent.parent
MINI = str(REPO_ROOT / "tests" / "fixtures" / "mini")


@pytest.fixture
def corpus(tmp_path):
    build_synthetic_corpus(tmp_path / "corpus", 15, seed=21, n_orgs=3)
    return tmp_path / "corpus"


@pytest.fixture
def built_index(corpus, tmp_path):
    path = tmp_path / "index.bin"
    assert main(["index", "build", "--corpus", str(corpus), "--out", str(path)]) == 0
    return path


@pytest.fixture
def built_vectors(corpus, tmp_path):
    path = tmp_path / "vectors.bin"
    assert main(["embed", "--corpus", str(corpus), "--encoder", "reference",
                 "--out", str(path)]) == 0
    return path


def test_stats_on_bundled_mini_corpus(capsys):
    assert main(["stats", "--corpus", MINI]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["n_docs"] == 20
    assert payload["total_tokens"] > 0
    assert "org_histogram" in payload
    assert "median_tokens" in payload


def test_stats_table_format(capsys):
    assert main(["stats", "--corpus", MINI, "--format", "table"]) == 0
    out = capsys.readouterr().out
    assert "n_docs" in out
    assert "{" not in out.splitlines()[0]


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_missing_required_setting_exits_2(capsys):
    assert main(["stats"]) == 2
    assert "corpus" in capsys.readouterr().err


def test_index_build_and_search(built_index, capsys):
    capsys.readouterr()
    assert main(["index", "search", "--index", str(built_index),
                 "--query", "απόφαση", "-k", "3"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload


def test_embed_cluster_disthist(built_vectors, capsys):
    capsys.readouterr()
    assert main(["cluster", "--vectors", str(built_vectors), "-k", "3", "--seed", "1"]) == 0
    cluster_payload = json.loads(capsys.readouterr().out)
    assert len(cluster_payload["centroid_documents"]) == 3

    assert main(["disthist", "--vectors", str(built_vectors),
                 "--sample", "10", "--bins", "8"]) == 0
    hist_payload = json.loads(capsys.readouterr().out)
    assert hist_payload["n_pairs"] == 45


def test_boiler_segment_and_swap_eval(tmp_path, capsys):
    from apofasis.testing import build_template_pair_corpus

    corpus = build_template_pair_corpus(tmp_path / "tpl", n_pairs=3, seed=5)
    vectors = tmp_path / "v.bin"
    assert main(["embed", "--corpus", str(tmp_path / "tpl"), "--encoder", "reference",
                 "--out", str(vectors)]) == 0
    capsys.readouterr()

    ada = corpus.pairs[0].ada_a
    assert main(["boiler", "segment", "--corpus", str(tmp_path / "tpl"),
                 "--vectors", str(vectors), "--ada", ada, "--neighbors", "1",
                 "--min-run", "1"]) == 0
    seg_payload = json.loads(capsys.readouterr().out)
    assert seg_payload["ada"] == ada
    assert seg_payload["spans"]

    pair_file = tmp_path / "pairs.jsonl"
    pair_file.write_text(
        "\n".join(
            json.dumps({"pair_id": p.pair_id, "ada_a": p.ada_a, "ada_b": p.ada_b})
            for p in corpus.pairs
        ),
        encoding="utf-8",
    )
    assert main(["boiler", "swap-eval", "--corpus", str(tmp_path / "tpl"),
                 "--pairs", str(pair_file)]) == 0
    eval_payload = json.loads(capsys.readouterr().out)
    assert eval_payload["pairs"] == 3
    assert eval_payload["re_mean"] == 0.0


def test_boiler_prevalence(tmp_path, capsys):
    from apofasis.testing import build_single_template_corpus

    build_single_template_corpus(tmp_path / "tpl", 12, seed=6)
    vectors = tmp_path / "v.bin"
    main(["embed", "--corpus", str(tmp_path / "tpl"), "--encoder", "reference",
          "--out", str(vectors)])
    capsys.readouterr()
    csv_out = tmp_path / "centroids.csv"
    assert main(["boiler", "prevalence", "--corpus", str(tmp_path / "tpl"),
                 "--vectors", str(vectors), "--k-list", "2,3",
                 "--neighbors", "3", "--csv", str(csv_out)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert set(payload) == {"2", "3"}
    assert csv_out.is_file()


def test_ask_round_trip(built_index, tmp_path, capsys):
    capsys.readouterr()
    assert main(["ask", "--question", "απόφαση δαπάνης", "--index", str(built_index),
                 "--sessions", str(tmp_path / "sessions")]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert "concise_answer" in payload
    assert payload["session_id"]


def test_harvest_against_stub(tmp_path, capsys):
    docs = [
        StoredDocument(record=synthetic_record(f"ΗΑΡΒ{i:04d}ΑΒ-Τ{i % 10}Σ"),
                       body_markdown=f"σώμα {i}")
        for i in range(6)
    ]
    with StubDiavgeiaServer(docs) as server:
        env_backup = os.environ.get("APOFASIS_API_BASE")
        os.environ["APOFASIS_API_BASE"] = server.base_url
        try:
            assert main(["harvest", "--from", "2021-01-01", "--to", "2021-12-31",
                         "--rps", "1000", "--out", str(tmp_path / "harvested")]) == 0
        finally:
            if env_backup is None:
                del os.environ["APOFASIS_API_BASE"]
            else:
                os.environ["APOFASIS_API_BASE"] = env_backup
    payload = json.loads(capsys.readouterr().out)
    assert payload["fetched_adas"] == 6


def test_eval_auto_and_manual_and_fixtures(built_index, tmp_path, capsys):
    pairs_file = tmp_path / "pairs.jsonl"
    pairs_file.write_text(
        json.dumps({"question": "Ερώτηση;", "ground_truth": "Απάντηση.",
                    "ada": "AAAAAAAA-AAA"}) + "\n",
        encoding="utf-8",
    )
    capsys.readouterr()
    assert main(["eval", "auto", "--pairs", str(pairs_file),
                 "--index", str(built_index)]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows["Total Comparisons"] == "1"

    results_file = tmp_path / "manual.json"
    results_file.write_text(
        json.dumps(
            {
                "results": [
                    {
                        "organization": "Φορέας",
                        "verdicts": {
                            "count_list": "FULL",
                            "total_amount": "PARTIAL",
                            "signers": "FULL",
                            "topics": "FULL",
                        },
                    }
                ]
            },
            ensure_ascii=False,
        ),
        encoding="utf-8",
    )
    assert main(["eval", "manual", "--results", str(results_file)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["overall_accuracy"] == pytest.approx(87.5)

    assert main(["eval", "fixtures"]) == 0
    out = capsys.readouterr().out
    assert "MISMATCH" in out
    assert "ok" in out


class TestConfigPrecedence:
    def _config_file(self, tmp_path, workers: int) -> str:
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"corpus": MINI, "workers": workers}), encoding="utf-8")
        return str(path)

    def test_file_alone(self, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv("APOFASIS_WORKERS", raising=False)
        assert main(["--config", self._config_file(tmp_path, 2), "stats"]) == 0
        assert json.loads(capsys.readouterr().out)["n_docs"] == 20

    def test_env_overrides_file(self, tmp_path, monkeypatch, capsys):
        from apofasis.cli import load_config_file, resolve

        monkeypatch.setenv("APOFASIS_WORKERS", "4")
        config = load_config_file(self._config_file(tmp_path, 2))
        assert resolve("workers", None, config) == 4

    def test_flag_overrides_env_and_file(self, tmp_path, monkeypatch):
        from apofasis.cli import load_config_file, resolve

        monkeypatch.setenv("APOFASIS_WORKERS", "4")
        config = load_config_file(self._config_file(tmp_path, 2))
        assert resolve("workers", 8, config) == 8

    def test_file_value_used_when_nothing_else_set(self, tmp_path, monkeypatch):
        from apofasis.cli import load_config_file, resolve

        monkeypatch.delenv("APOFASIS_WORKERS", raising=False)
        config = load_config_file(self._config_file(tmp_path, 2))
        assert resolve("workers", None, config) == 2

    def test_unknown_config_keys_rejected(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"corpus": MINI, "τυπογραφικό": 1}), encoding="utf-8")
        assert main(["--config", str(path), "stats"]) == 2
        assert "unknown config keys" in capsys.readouterr().err


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "apofasis.cli", "--version"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
