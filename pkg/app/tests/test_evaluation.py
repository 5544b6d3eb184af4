import random

import numpy as np
import pytest

from app.models.cdn import DiversityConfig
from app.models.evaluation import (
    ACROSS_ROW,
    PROTOTYPE_VS_GENERATED,
    WITHIN_POPULATION,
    GenerationRun,
    MetricsReport,
    UnconditionalReport,
)
from app.services.data_pipeline import build_vocab, encode
from app.services.evaluation import (
    aggregate,
    class_distance_ratios,
    decoder_comparison,
    diversity_sweep,
    drug_hit_report,
    evaluate_run,
    latent_class_distances,
    levenshtein_histograms,
    merge_histograms,
    reconstruction_accuracy,
    unconditional_validity,
)
from app.services.smiles import is_valid_smiles, normalize
from app.utils.exceptions import ClassTooSmall
from app.utils.reports import (
    distance_summary_rows,
    write_candidates,
    write_distance_summary,
    write_histograms,
    write_metrics,
    write_unconditional,
)


def run_of(prototype, candidates):
    return GenerationRun(prototype, list(candidates), DiversityConfig(k=len(candidates)))


class TestReconstructionAccuracy:
    def test_one_symbol_off(self):
        vocabulary = build_vocab(["CN=C=O", "CN=C=S"])
        prototype = encode("CN=C=O", vocabulary)
        assert reconstruction_accuracy(prototype, "CN=C=S", vocabulary) == pytest.approx(6 / 7)
        assert reconstruction_accuracy(prototype, "CN=C=S") == pytest.approx(6 / 7)

    def test_exact(self):
        vocabulary = build_vocab(["CCO"])
        assert reconstruction_accuracy(encode("CCO", vocabulary), "CCO", vocabulary) == 1.0

    def test_empty_candidate(self):
        vocabulary = build_vocab(["CCO"])
        assert reconstruction_accuracy(encode("CCO", vocabulary), "", vocabulary) == 0.0

    def test_overlong_candidate_misses_end(self):
        vocabulary = build_vocab(["CCO"])
        assert reconstruction_accuracy(encode("CCO", vocabulary), "CCOC", vocabulary) == pytest.approx(3 / 4)

    def test_halogens_compare_as_one_symbol(self):
        vocabulary = build_vocab(["CCl", "CBr"])
        assert reconstruction_accuracy(encode("CCl", vocabulary), "CBr", vocabulary) == pytest.approx(2 / 3)


class TestEvaluateRun:
    def test_worked_example(self):
        report = evaluate_run(run_of("CCO", ["CCO", "CCN", "CCN", "C1CC"]))
        assert report.acc == pytest.approx((1.0 + 0.75 + 0.75 + 0.25) / 4)
        assert report.valid == 0.75
        assert report.novel == 0.5
        assert report.acc_at_k == 1.0
        assert report.valid_at_k == 2.0
        assert report.novel_at_k == 1.0
        assert report.novel_graph == 0.5
        assert report.k == 4

    def test_graph_novelty_ignores_spelling(self):
        report = evaluate_run(run_of("CCO", ["OCC"]))
        assert report.novel == 1.0
        assert report.novel_graph == 0.0

    def test_all_invalid(self):
        report = evaluate_run(run_of("CCO", ["C1CC", "C(", ""]))
        assert report.valid == report.novel == report.valid_at_k == 0.0

    def test_matches_brute_force_counts(self):
        rnd = random.Random(0)
        pool = ["CCO", "OCC", "CCN", "c1ccccc1", "C1CC", "C=C=C=O=C", "CC(=O)O", "CC("]
        for _ in range(200):
            prototype = rnd.choice(pool[:4])
            candidates = [rnd.choice(pool) for _ in range(rnd.randint(1, 8))]
            report = evaluate_run(run_of(prototype, candidates))
            k = len(candidates)

            valid = [c for c in candidates if is_valid_smiles(c)]
            novel = [c for c in valid if c != prototype]
            assert report.valid == pytest.approx(len(valid) / k)
            assert report.novel == pytest.approx(len(novel) / k)
            assert report.acc_at_k == candidates.count(prototype)
            assert report.valid_at_k == len(set(valid))
            assert report.novel_at_k == len(set(novel))
            assert report.novel <= report.valid
            assert 0.0 <= report.acc <= 1.0
            assert report.novel_graph <= report.novel


class TestAggregate:
    def test_macro_average(self):
        a = MetricsReport(1.0, 1.0, 0.0, 2.0, 1.0, 0.0, 0.0, k=2)
        b = MetricsReport(0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, k=2)
        mean = aggregate([a, b])
        assert mean.acc == 0.75
        assert mean.valid == 0.5
        assert mean.acc_at_k == 1.0
        assert mean.k == 2

    def test_empty(self):
        assert aggregate([]).k == 0


class TestDrugHits:
    def test_hits_exclude_own_prototype(self):
        runs = [
            run_of("CCO", ["OCC", "c1ccccc1", "C1CC"]),
            run_of("CCN", ["NCC", "CC(C)O", "c1ccccc1"]),
        ]
        report = drug_hit_report(runs, ["c1ccccc1", "CCO", "CC(C)O", "CCN"])
        assert report.hits == 2
        assert report.valid_generated == 5
        assert report.percent == pytest.approx(40.0)
        assert [drug for _, drug in report.matches] == [normalize("c1ccccc1"), normalize("CC(C)O")]

    def test_no_valid_output(self):
        report = drug_hit_report([run_of("CCO", ["C1CC"])], ["CCO"])
        assert report.hits == 0
        assert report.percent == 0.0

    def test_empty_drug_list(self):
        with pytest.raises(ValueError):
            drug_hit_report([run_of("CCO", ["CCN"])], [])


class TestDistanceHistograms:
    def test_valid_unique_candidates_only(self):
        to_prototype, within = levenshtein_histograms(run_of("CCO", ["CCO", "CCN", "CCN", "CCCC", "C1CC"]))
        assert to_prototype.kind == PROTOTYPE_VS_GENERATED
        assert sorted(to_prototype.distances) == [0, 1, 2]
        assert within.kind == WITHIN_POPULATION
        assert sorted(within.distances) == [1, 2, 2]

    @pytest.mark.parametrize("u", [1, 2, 5])
    def test_pair_count(self, u):
        candidates = ["C" * n for n in range(1, u + 1)]
        _, within = levenshtein_histograms(run_of("CCO", candidates))
        assert len(within.distances) == u * (u - 1) // 2

    def test_merge(self):
        first = levenshtein_histograms(run_of("CCO", ["CCN", "CCC"]))
        second = levenshtein_histograms(run_of("CCN", ["CCN", "CCCN"]))
        merged = merge_histograms([*first, *second])
        assert [h.kind for h in merged] == [PROTOTYPE_VS_GENERATED, WITHIN_POPULATION]
        assert merged[0].counts() == {0: 1, 1: 3}
        assert merged[1].counts() == {1: 2}
        assert merged[0].summary == pytest.approx((0.75, np.std([1, 1, 0, 1])))


class TestClassDistances:
    @pytest.fixture
    def embeddings(self):
        rng = np.random.default_rng(0)
        return {
            "near_x": np.array([10.0, 0.0, 0.0]) + rng.normal(0, 0.1, (4, 3)),
            "near_y": np.array([0.0, 10.0, 0.0]) + rng.normal(0, 0.1, (4, 3)),
        }

    def test_tight_classes_score_below_one(self, embeddings):
        report = class_distance_ratios(embeddings)
        for name in embeddings:
            row = report.row(name)
            assert 0.0 < row.cosine < 1.0
            assert 0.0 < row.l2 < 1.0
            assert 0.0 < row.l1 < 1.0
            assert row.members == 4
        across = report.row(ACROSS_ROW)
        assert (across.cosine, across.l2, across.l1, across.members) == (1.0, 1.0, 1.0, 8)

    def test_cosine_ignores_vector_scale(self, embeddings):
        scales = np.random.default_rng(1).uniform(0.5, 3.0, (4, 1))
        scaled = {name: vectors * scales for name, vectors in embeddings.items()}
        a, b = class_distance_ratios(embeddings), class_distance_ratios(scaled)
        for name in embeddings:
            assert b.row(name).cosine == pytest.approx(a.row(name).cosine)

    def test_identical_members(self):
        report = class_distance_ratios({"same": np.ones((3, 2)), "other": np.array([[1.0, -1.0], [-1.0, 1.0]])})
        assert report.row("same").l2 == 0.0

    def test_class_too_small(self):
        with pytest.raises(ClassTooSmall):
            class_distance_ratios({"a": np.ones((1, 3)), "b": np.ones((2, 3))})

    def test_latent_classes(self, tiny_model, rng):
        classes = {"small": ["CCO", "CCN", "CC(C)O"], "aromatic": ["c1ccccc1", "Nc1ccc(O)cc1"]}
        report = latent_class_distances(classes, tiny_model, rng)
        assert [row.name for row in report.rows] == ["small", "aromatic", ACROSS_ROW]
        assert report.row("small").members == 3
        for row in report.rows:
            assert np.isfinite([row.cosine, row.l2, row.l1]).all()

    def test_latent_class_too_small(self, tiny_model):
        with pytest.raises(ClassTooSmall):
            latent_class_distances({"lonely": ["CCO"]}, tiny_model)


class TestSweeps:
    def test_single_cell(self, tiny_model):
        cells = diversity_sweep(tiny_model, ["CCO", "CCN"], [1.0], ["argmax"], k=2)
        assert len(cells) == 1
        cell = cells[0]
        assert (cell.diversity, cell.mode, cell.k) == (1.0, "argmax", 2)
        assert 0.0 <= cell.report.valid <= 1.0
        assert cell.report.valid_at_k <= 2

    def test_decoder_comparison_covers_both_modes(self, tiny_model):
        cells = decoder_comparison(tiny_model, ["CCO"], [1.0, 2.0], k=2, seed=3)
        assert [(c.diversity, c.mode) for c in cells] == [
            (1.0, "argmax"),
            (1.0, "sampling"),
            (2.0, "argmax"),
            (2.0, "sampling"),
        ]


class TestUnconditional:
    def test_counts_match_candidates(self, tiny_model):
        report = unconditional_validity(tiny_model, 8, "sampling", seed=2)
        assert report.samples == 8
        assert report.valid == sum(is_valid_smiles(c) for c in report.candidates)
        assert report.unique_valid <= report.valid
        assert 0.0 <= report.valid_fraction <= 1.0
        assert unconditional_validity(tiny_model, 8, "sampling", seed=2).candidates == report.candidates

    def test_single_draw_matches_prior_sampler(self, tiny_model):
        one = tiny_model.generate_unconditional(np.random.default_rng(5), "sampling")
        assert [one] == tiny_model.sample_prior(1, np.random.default_rng(5), "sampling")

    def test_no_samples(self, tiny_model):
        report = unconditional_validity(tiny_model, 0)
        assert (report.samples, report.valid, report.valid_fraction) == (0, 0, 0.0)


class TestReportFiles:
    def test_metrics_table(self, tmp_path):
        report = evaluate_run(run_of("CCO", ["CCO", "CCN", "CCN", "C1CC"]))
        path = write_metrics(report, tmp_path / "recon.csv", 1.0, "argmax", 4)
        lines = path.read_text().splitlines()
        assert lines[0] == "metric,D,mode,k,value"
        assert lines[1] == "acc,1.000000,argmax,4,0.687500"
        assert len(lines) == 1 + 7

    def test_candidates_have_no_header(self, tmp_path):
        path = write_candidates([run_of("CCO", ["CCN", "C1CC"])], tmp_path / "candidates.tsv")
        assert path.read_text() == "CCO\tCCN\t1\nCCO\tC1CC\t0\n"

    def test_histogram_rows(self, tmp_path):
        to_prototype, _ = levenshtein_histograms(run_of("CCO", ["CCN", "CCC", "CCCC"]))
        path = write_histograms([to_prototype], tmp_path / "hist.csv")
        assert path.read_text() == f"kind,distance,count\n{PROTOTYPE_VS_GENERATED},1,2\n{PROTOTYPE_VS_GENERATED},2,1\n"

    def test_distance_summary(self, tmp_path):
        rows = distance_summary_rows(levenshtein_histograms(run_of("CCO", ["CCN", "CCC", "CCCC"])), 2.0, "sampling")
        path = write_distance_summary(rows, tmp_path / "distance_summary.csv")
        assert path.read_text() == (
            "kind,D,mode,mean,std,n\n"
            f"{PROTOTYPE_VS_GENERATED},2.000000,sampling,1.333333,0.471405,3\n"
            f"{WITHIN_POPULATION},2.000000,sampling,1.333333,0.471405,3\n"
        )

    def test_unconditional_files(self, tmp_path):
        report = UnconditionalReport("argmax", ("CCO", "C1CC", "CCO"), valid=2, unique_valid=1)
        path = write_unconditional(report, tmp_path / "unconditional.tsv")
        assert path.read_text() == "CCO\t1\nC1CC\t0\nCCO\t1\n"
        summary = (tmp_path / "unconditional.csv").read_text()
        assert summary == "mode,samples,valid,unique_valid,valid_fraction\nargmax,3,2,1,0.666667\n"
