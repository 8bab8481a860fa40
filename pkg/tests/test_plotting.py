from __future__ import annotations

from dyncheck.bench import bench
from dyncheck.corpus import generate_corpus, run_and_score
from dyncheck.plotting import plot_bench, plot_scorecards


def test_scorecard_figure(tmp_path):
    cards = {"full": run_and_score(generate_corpus(0, per_class=1)), "empty": run_and_score([])}
    path = plot_scorecards(cards, tmp_path / "score.png")
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_bench_figure(tmp_path):
    path = plot_bench(bench(2000), tmp_path / "bench.svg")
    assert b"<svg" in path.read_bytes()[:500]
