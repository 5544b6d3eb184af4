import json

import pytest

from app.cli.common import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, MANIFEST_NAME
from app.main import main
from app.tests.conftest import write_lines
from app.utils.reports import file_digest

TINY_OVERRIDES = [
    "max_len=30",
    "embed_dim=8",
    "filter_widths=2,3",
    "filters_per_width=4",
    "latent_dim=6",
    "lstm_units=8",
    "batch_size=4",
    "max_epochs=2",
]


def train_argv(corpus, out, *extra):
    argv = ["train", "--corpus", str(corpus), "--out", str(out), "--validation-size", "2", "--test-size", "2"]
    for pair in TINY_OVERRIDES:
        argv += ["--config", pair]
    return argv + list(extra)


def read_manifest(out):
    return json.loads((out / MANIFEST_NAME).read_text())


class TestUsageErrors:
    def test_missing_required_flag(self):
        assert main(["train"]) == EXIT_USAGE

    def test_unknown_command(self):
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_unknown_config_key(self, corpus_file, tmp_path):
        assert main(train_argv(corpus_file, tmp_path / "out", "--config", "dropout=0.5")) == EXIT_USAGE

    def test_invalid_config_value(self, corpus_file, tmp_path):
        assert main(train_argv(corpus_file, tmp_path / "out", "--config", "latent_dim=0")) == EXIT_USAGE

    def test_malformed_override(self, corpus_file, tmp_path):
        assert main(train_argv(corpus_file, tmp_path / "out", "--config", "latent_dim")) == EXIT_USAGE

    def test_unknown_eval_subcommand(self, trained_checkpoint):
        assert main(["eval", "bogus", "--checkpoint", str(trained_checkpoint)]) == EXIT_USAGE

    def test_bad_diversity_list(self, trained_checkpoint, tmp_path):
        argv = ["eval", "sweep", "--checkpoint", str(trained_checkpoint), "--out", str(tmp_path)]
        assert main(argv + ["--diversities", "a,b"]) == EXIT_USAGE
        assert main(argv + ["--diversities", "1,0"]) == EXIT_USAGE
        assert main(argv + ["--modes", "beam"]) == EXIT_USAGE


class TestTrain:
    def test_outputs_and_reproducibility(self, corpus_file, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        assert main(train_argv(corpus_file, first)) == EXIT_OK
        assert main(train_argv(corpus_file, second)) == EXIT_OK

        for name in ("model.cdn", "loss_curve.csv", "validation.smi", "test.smi"):
            assert (first / name).exists(), name
        assert (first / "loss_curve.csv").read_bytes() == (second / "loss_curve.csv").read_bytes()
        assert (first / "model.cdn").read_bytes() == (second / "model.cdn").read_bytes()
        assert len((first / "test.smi").read_text().splitlines()) == 2

        manifest = read_manifest(first)
        assert manifest["status"] == "ok"
        assert manifest["command"] == "train"
        assert manifest["config"]["latent_dim"] == 6
        assert manifest["inputs"]["corpus"]["sha256"] == file_digest(corpus_file)

    def test_loss_curve_has_one_row_per_epoch(self, corpus_file, tmp_path):
        assert main(train_argv(corpus_file, tmp_path)) == EXIT_OK
        lines = (tmp_path / "loss_curve.csv").read_text().splitlines()
        assert lines[0].startswith("epoch,steps,learning_rate")
        assert len(lines) == 3

    def test_exclusion_list(self, corpus_file, tmp_path):
        exclude = write_lines(tmp_path / "drugs.smi", ["OCC"])
        out = tmp_path / "out"
        assert main(train_argv(corpus_file, out, "--exclude", str(exclude))) == EXIT_OK
        held_out = (out / "validation.smi").read_text() + (out / "test.smi").read_text()
        assert "CCO\n" not in held_out
        assert "exclude" in read_manifest(out)["inputs"]

    def test_missing_corpus_file(self, tmp_path):
        out = tmp_path / "out"
        assert main(train_argv(tmp_path / "absent.smi", out)) == EXIT_FAILURE
        manifest = read_manifest(out)
        assert manifest["status"] == "failed"
        assert "absent.smi" in manifest["error"]


class TestGenerate:
    def argv(self, checkpoint, out, prototype="CCO"):
        return [
            "generate", "--checkpoint", str(checkpoint), "--prototype", prototype,
            "--samples", "5", "--decoder", "sampling", "--diversity", "2", "--seed", "3", "--out", str(out),
        ]

    def test_candidates_are_seeded(self, trained_checkpoint, tmp_path):
        assert main(self.argv(trained_checkpoint, tmp_path / "a")) == EXIT_OK
        assert main(self.argv(trained_checkpoint, tmp_path / "b")) == EXIT_OK
        first = (tmp_path / "a" / "candidates.tsv").read_text()
        assert len(first.splitlines()) == 5
        assert all(line.startswith("CCO\t") for line in first.splitlines())
        assert first == (tmp_path / "b" / "candidates.tsv").read_text()
        assert (tmp_path / "a" / "summary.csv").exists()

    def test_prototype_file(self, trained_checkpoint, tmp_path):
        prototypes = write_lines(tmp_path / "protos.smi", ["CCO", "CCN", "c1ccccc1"])
        argv = [
            "generate", "--checkpoint", str(trained_checkpoint), "--prototypes", str(prototypes),
            "--samples", "2", "--out", str(tmp_path / "out"),
        ]
        assert main(argv) == EXIT_OK
        assert len((tmp_path / "out" / "candidates.tsv").read_text().splitlines()) == 6

    def test_unencodable_prototype(self, trained_checkpoint, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(self.argv(trained_checkpoint, out, prototype="CCS")) == EXIT_FAILURE
        assert "position" in capsys.readouterr().err
        assert read_manifest(out)["status"] == "failed"

    def test_missing_checkpoint(self, tmp_path):
        assert main(self.argv(tmp_path / "nope.cdn", tmp_path / "out")) == EXIT_FAILURE


class TestGenerateUnconditional:
    def argv(self, checkpoint, out, count="6"):
        return [
            "generate", "--checkpoint", str(checkpoint), "--unconditional", count,
            "--decoder", "sampling", "--seed", "1", "--out", str(out),
        ]

    def test_prior_samples_and_summary(self, trained_checkpoint, tmp_path):
        assert main(self.argv(trained_checkpoint, tmp_path / "a")) == EXIT_OK
        assert main(self.argv(trained_checkpoint, tmp_path / "b")) == EXIT_OK
        lines = (tmp_path / "a" / "unconditional.tsv").read_text().splitlines()
        assert len(lines) == 6
        assert all(line.rsplit("\t", 1)[1] in ("0", "1") for line in lines)
        assert (tmp_path / "a" / "unconditional.tsv").read_bytes() == (tmp_path / "b" / "unconditional.tsv").read_bytes()

        summary = (tmp_path / "a" / "unconditional.csv").read_text().splitlines()
        assert summary[0] == "mode,samples,valid,unique_valid,valid_fraction"
        mode, samples, valid = summary[1].split(",")[:3]
        assert (mode, samples) == ("sampling", "6")
        assert int(valid) == sum(line.endswith("\t1") for line in lines)

        manifest = read_manifest(tmp_path / "a")
        assert manifest["status"] == "ok"
        assert manifest["config"]["unconditional"] == 6

    @pytest.mark.parametrize("count", ["0", "-3"])
    def test_count_must_be_positive(self, trained_checkpoint, tmp_path, count):
        assert main(self.argv(trained_checkpoint, tmp_path / "out", count)) == EXIT_USAGE

    def test_excludes_prototypes(self, trained_checkpoint, tmp_path):
        argv = self.argv(trained_checkpoint, tmp_path / "out") + ["--prototype", "CCO"]
        assert main(argv) == EXIT_USAGE


class TestEval:
    def test_recon_defaults_to_held_out_test_set(self, trained_checkpoint, tmp_path):
        out = tmp_path / "recon"
        assert main(["eval", "recon", "--checkpoint", str(trained_checkpoint), "--samples", "2",
                     "--out", str(out)]) == EXIT_OK
        lines = (out / "recon.csv").read_text().splitlines()
        assert lines[0] == "metric,D,mode,k,value"
        assert [line.split(",")[0] for line in lines[1:]] == [
            "acc", "valid", "novel", "acc_at_k", "valid_at_k", "novel_at_k", "novel_graph",
        ]
        manifest = read_manifest(out)
        assert "averaging" in manifest["config"]["metrics"]
        assert manifest["inputs"]["prototypes"]["path"].endswith("test.smi")

    def test_drugs(self, trained_checkpoint, tmp_path):
        prototypes = write_lines(tmp_path / "protos.smi", ["CCO", "CCN"])
        fda = write_lines(tmp_path / "fda.smi", ["c1ccccc1", "CC(=O)O"])
        out = tmp_path / "drugs"
        argv = ["eval", "drugs", "--checkpoint", str(trained_checkpoint), "--prototypes", str(prototypes),
                "--fda", str(fda), "--samples", "3", "--out", str(out)]
        assert main(argv) == EXIT_OK
        lines = (out / "drug_hits.csv").read_text().splitlines()
        assert lines[0] == "hits,percent,valid_generated"
        assert len(lines) == 2
        assert read_manifest(out)["config"]["diversity"] == 3.0

    def test_sweep(self, trained_checkpoint, tmp_path):
        out = tmp_path / "sweep"
        argv = ["eval", "sweep", "--checkpoint", str(trained_checkpoint), "--diversities", "1,2",
                "--modes", "argmax,sampling", "--samples", "2", "--out", str(out)]
        assert main(argv) == EXIT_OK
        assert len((out / "sweep.csv").read_text().splitlines()) == 1 + 2 * 2 * 7

    def test_distances(self, trained_checkpoint, tmp_path):
        out = tmp_path / "distances"
        argv = ["eval", "distances", "--checkpoint", str(trained_checkpoint), "--diversities", "1,3",
                "--samples", "4", "--out", str(out)]
        assert main(argv) == EXIT_OK
        for name in ("prototype_vs_generated_D1.csv", "within_population_D1.csv",
                     "prototype_vs_generated_D3.csv", "within_population_D3.csv"):
            assert (out / name).read_text().startswith("kind,distance,count\n"), name

        summary = (out / "distance_summary.csv").read_text().splitlines()
        assert summary[0] == "kind,D,mode,mean,std,n"
        rows = [line.split(",") for line in summary[1:]]
        assert [(kind, d, mode) for kind, d, mode, *_ in rows] == [
            ("prototype_vs_generated", "1.000000", "argmax"),
            ("within_population", "1.000000", "argmax"),
            ("prototype_vs_generated", "3.000000", "argmax"),
            ("within_population", "3.000000", "argmax"),
        ]
        histogram = (out / "prototype_vs_generated_D3.csv").read_text().splitlines()[1:]
        assert int(rows[2][5]) == sum(int(line.split(",")[2]) for line in histogram)


class TestAnalyzeLatent:
    def classes(self, tmp_path, lines):
        return write_lines(tmp_path / "classes.tsv", lines)

    def test_class_report(self, trained_checkpoint, tmp_path):
        classes = self.classes(tmp_path, [
            "alcohols\tCCO", "alcohols\tCC(C)O",
            "amines\tCCN", "amines\tNNCCc1ccccc1",
            "aromatics\tc1ccccc1", "aromatics\tNc1ccc(O)cc1",
            "amides\tNC(=O)c1cnccn1", "amides\tNNC(=O)c1ccncc1",
        ])
        out = tmp_path / "latent"
        argv = ["analyze-latent", "--checkpoint", str(trained_checkpoint), "--classes", str(classes),
                "--out", str(out)]
        assert main(argv) == EXIT_OK
        lines = (out / "class_distances.csv").read_text().splitlines()
        assert lines[0] == "class,cosine,l2,l1,members"
        assert len(lines) == 1 + 5
        assert lines[-1] == "Across Drugs,1.000000,1.000000,1.000000,8"

    def test_single_member_class(self, trained_checkpoint, tmp_path):
        classes = self.classes(tmp_path, ["alcohols\tCCO", "alcohols\tCCN", "lonely\tc1ccccc1"])
        out = tmp_path / "latent"
        argv = ["analyze-latent", "--checkpoint", str(trained_checkpoint), "--classes", str(classes),
                "--out", str(out)]
        assert main(argv) == EXIT_FAILURE
        assert read_manifest(out)["status"] == "failed"


@pytest.mark.parametrize("argv", [["--help"], ["train", "--help"], ["eval", "recon", "--help"]])
def test_help_exits_cleanly(argv):
    assert main(argv) == EXIT_OK


class TestInfo:
    def test_prints_registries(self, capsys):
        assert main(["--info"]) == EXIT_OK
        info = json.loads(capsys.readouterr().out)
        assert info["name"] == "CDN Toolkit"
        assert set(info["commands"]) == {"train", "generate", "eval", "analyze-latent"}
        assert "unconditional_report" in info["models"]
        assert "UnconditionalReport" in info["model_categories"]["evaluation"]
        assert info["services"] == sorted(["smiles", "autodiff", "data_pipeline", "cdn_model", "evaluation"])
        assert "checkpoint_format" in info["core"]
        assert "reports" in info["utilities"]

    def test_command_still_required_without_info(self):
        assert main([]) == EXIT_USAGE
