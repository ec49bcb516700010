import json

import numpy as np
import pytest
from click.testing import CliRunner

from crossmpt.cli import main
from crossmpt.codes import dense_text_dumps, get_code
from crossmpt.gf2 import BinaryMatrix


@pytest.fixture()
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)


class TestCodesCommands:
    def test_list_shows_registry(self, runner):
        result = invoke(runner, "codes", "list")
        assert result.exit_code == 0
        assert "bch_63_45" in result.output
        assert "ldpc_121_80" in result.output

    def test_validate_all(self, runner):
        result = invoke(runner, "codes", "validate")
        assert result.exit_code == 0
        assert result.output.count(": ok") == 11


class TestTrainCommand:
    def test_smoke_train_writes_artifacts(self, runner, tmp_path):
        out = tmp_path / "run"
        result = invoke(
            runner, "train", "--code", "hamming_7_4", "--variant", "crossmpt",
            "--n-layers", 1, "--dim", 8, "--epochs", 1, "--batches-per-epoch", 5,
            "--batch-size", 8, "--seed", 1, "--out", out,
        )
        assert result.exit_code == 0, result.output
        assert (out / "checkpoint_final.npz").exists()
        assert (out / "training_log.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["code_hashes"]["hamming_7_4"]
        assert manifest["config"]["epochs"] == 1

    def test_missing_code_is_usage_error(self, runner):
        result = runner.invoke(main, ["train", "--variant", "crossmpt"])
        assert result.exit_code == 2
        assert "missing code" in result.output

    def test_unknown_code_is_usage_error(self, runner):
        result = runner.invoke(main, ["train", "--code", "bch_9_9"])
        assert result.exit_code == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numeric_failure_exits_3(self, runner, tmp_path):
        result = runner.invoke(main, [
            "train", "--code", "hamming_7_4", "--variant", "crossmpt", "--n-layers", "1",
            "--dim", "8", "--epochs", "1", "--batches-per-epoch", "50", "--batch-size", "8",
            "--lr0", "1e200", "--lr-min", "1e198", "--out", str(tmp_path / "nan"),
        ])
        assert result.exit_code == 3
        assert "numeric failure" in result.output

    def test_multicode_foundation_training(self, runner, tmp_path):
        out = tmp_path / "multi"
        result = invoke(
            runner, "train", "--codes", "bch_63_45,ldpc_49_24", "--variant", "fcrossmpt",
            "--n-layers", 1, "--dim", 8, "--epochs", 1, "--batches-per-epoch", 4,
            "--batch-size", 8, "--out", out,
        )
        assert result.exit_code == 0, result.output
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["codes"] == ["bch_63_45", "ldpc_49_24"]


@pytest.fixture(scope="module")
def tiny_checkpoint(tmp_path_factory):
    out = tmp_path_factory.mktemp("ck")
    runner = CliRunner()
    result = runner.invoke(main, [
        "train", "--code", "bch_15_7", "--variant", "fcrossmpt", "--n-layers", "1",
        "--dim", "8", "--epochs", "1", "--batches-per-epoch", "5", "--batch-size", "8",
        "--seed", "2", "--out", str(out),
    ], catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return out / "checkpoint_final.npz"


class TestEvalCommand:
    def test_bp_eval_writes_rows(self, runner, tmp_path):
        out = tmp_path / "bp"
        result = invoke(
            runner, "eval", "--code", "ldpc_121_80", "--decoder", "bp", "--iters", 20,
            "--ebn0", "3,4,5,6", "--min-errors", 5, "--max-bits", 40000, "--out", out,
        )
        assert result.exit_code == 0, result.output
        lines = (out / "ber_report.csv").read_text().strip().splitlines()
        assert len(lines) == 5  # header + 4 SNR rows

    def test_uncoded_eval_matches_closed_form(self, runner, tmp_path):
        out = tmp_path / "unc"
        result = invoke(
            runner, "eval", "--code", "ldpc_32_16", "--decoder", "uncoded",
            "--ebn0", "4", "--min-errors", 2000, "--max-bits", 300000, "--out", out,
        )
        assert result.exit_code == 0, result.output
        row = (out / "ber_report.csv").read_text().strip().splitlines()[1].split(",")
        ber, lo, hi = float(row[5]), float(row[8]), float(row[9])
        from crossmpt.evaluation import uncoded_bpsk_ber
        assert lo <= uncoded_bpsk_ber(4.0, 0.5) <= hi

    def test_foundation_checkpoint_decodes_unseen_code(self, runner, tmp_path, tiny_checkpoint):
        out = tmp_path / "xfer"
        result = invoke(
            runner, "eval", "--code", "hamming_7_4", "--checkpoint", tiny_checkpoint,
            "--ebn0", "4", "--min-errors", 5, "--max-bits", 3000, "--out", out,
        )
        assert result.exit_code == 0, result.output
        assert (out / "ber_report.csv").exists()

    def test_rerun_is_bitwise_identical(self, runner, tmp_path):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            invoke(
                runner, "eval", "--code", "hamming_7_4", "--decoder", "uncoded",
                "--ebn0", "3,5", "--min-errors", 50, "--max-bits", 30000,
                "--seed", 9, "--out", out, "--bitwise",
            )
            outs.append(out)
        for name in ("ber_report.csv", "bitwise.csv", "manifest.json"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_requires_exactly_one_decoder_source(self, runner):
        result = runner.invoke(main, ["eval", "--code", "hamming_7_4"])
        assert result.exit_code == 2

    def test_code_specific_checkpoint_refuses_other_code(self, runner, tmp_path):
        train_out = tmp_path / "t"
        invoke(
            runner, "train", "--code", "hamming_7_4", "--variant", "crossmpt",
            "--n-layers", 1, "--dim", 8, "--epochs", 1, "--batches-per-epoch", 3,
            "--batch-size", 8, "--out", train_out,
        )
        result = runner.invoke(main, [
            "eval", "--code", "bch_15_7", "--checkpoint",
            str(train_out / "checkpoint_final.npz"), "--ebn0", "4",
            "--min-errors", "2", "--max-bits", "1000", "--out", str(tmp_path / "x"),
        ])
        assert result.exit_code == 2
        assert "code-specific" in result.output


class TestAnalyzeCommand:
    def test_bch_63_45_reports_published_densities(self, runner, tmp_path):
        out = tmp_path / "an"
        result = invoke(runner, "analyze", "--code", "bch_63_45", "--out", out)
        assert result.exit_code == 0, result.output
        assert "32.45%" in result.output and "53.09%" in result.output
        assert "h > 2*h_tilde: True" in result.output
        assert "cross lower: True" in result.output
        csv_text = (out / "complexity.csv").read_text()
        assert "crossmpt" in csv_text and "ecct" in csv_text

    def test_ldpc_discrepancy_is_logged(self, runner, tmp_path):
        result = runner.invoke(
            main, ["analyze", "--code", "ldpc_121_70", "--out", str(tmp_path / "an2")],
            catch_exceptions=False,
        )
        assert result.exit_code == 0
        assert "density discrepancy" in result.output

    def test_toy_pcm_file_hand_count(self, runner, tmp_path):
        # 3x6 toy: hand-counted h_tilde = 9 ones; ecct mask counted by hand below
        h = BinaryMatrix([
            [1, 1, 0, 1, 0, 0],
            [0, 1, 1, 0, 1, 0],
            [1, 0, 0, 0, 1, 1],
        ])
        pcm = tmp_path / "toy.txt"
        pcm.write_text(dense_text_dumps(h))
        out = tmp_path / "toy_out"
        result = invoke(runner, "analyze", "--pcm-file", pcm, "--out", out)
        assert result.exit_code == 0, result.output
        rows = (out / "complexity.csv").read_text().strip().splitlines()[1:]
        cross_row = rows[0].split(",")
        assert cross_row[0] == "crossmpt"
        assert int(cross_row[2]) == 9  # popcount by hand
        assert int(cross_row[1]) == 2 * 6 * 3


class TestDumpAttentionCommand:
    def test_forced_single_bit_error_dump(self, runner, tmp_path, tiny_checkpoint):
        out = tmp_path / "dump"
        result = invoke(
            runner, "dump-attention", "--checkpoint", tiny_checkpoint, "--code", "ldpc_32_16",
            "--flip-bit", 0, "--out", out,
        )
        assert result.exit_code == 0, result.output
        files = sorted(p.name for p in out.glob("layer*.csv"))
        # 1 layer x (2 maps + 2 column sums)
        assert len(files) == 4
        arr = np.loadtxt(out / "layer01_mag_to_syn.csv", delimiter=",")
        assert arr.shape == (32, 16)

    def test_layer_filter_limits_files(self, runner, tmp_path):
        train_out = tmp_path / "t"
        invoke(
            runner, "train", "--code", "hamming_7_4", "--variant", "crossmpt",
            "--n-layers", 3, "--dim", 8, "--epochs", 1, "--batches-per-epoch", 3,
            "--batch-size", 8, "--out", train_out,
        )
        out = tmp_path / "d"
        result = invoke(
            runner, "dump-attention", "--checkpoint", train_out / "checkpoint_final.npz",
            "--code", "hamming_7_4", "--layers", "1..2", "--out", out,
        )
        assert result.exit_code == 0, result.output
        mag_files = sorted(p.name for p in out.glob("layer*_mag_to_syn.csv"))
        assert len(mag_files) == 2

    def test_no_error_mode_same_shapes(self, runner, tmp_path, tiny_checkpoint):
        out = tmp_path / "clean"
        result = invoke(
            runner, "dump-attention", "--checkpoint", tiny_checkpoint, "--code", "ldpc_32_16",
            "--ebn0", 6.0, "--out", out,
        )
        assert result.exit_code == 0, result.output
        arr = np.loadtxt(out / "layer01_mag_to_syn.csv", delimiter=",")
        assert arr.shape == (32, 16)
        assert len(list(out.glob("layer*.csv"))) == 4

    def test_flip_position_out_of_range(self, runner, tmp_path, tiny_checkpoint):
        result = runner.invoke(main, [
            "dump-attention", "--checkpoint", str(tiny_checkpoint), "--code", "ldpc_32_16",
            "--flip-bit", "99", "--out", str(tmp_path / "x"),
        ])
        assert result.exit_code == 2


class TestBuildEnsembleCommand:
    def test_bch_31_21_p3(self, runner, tmp_path):
        out = tmp_path / "ens"
        result = invoke(runner, "build-ensemble", "--code", "bch_31_21", "--p", 3, "--out", out)
        assert result.exit_code == 0, result.output
        assert "uncovered positions: [30]" in result.output
        assert len(list(out.glob("branch*.txt"))) == 3
        cov = (out / "coverage.csv").read_text().strip().splitlines()
        assert len(cov) == 32

    def test_p_too_large(self, runner, tmp_path):
        result = runner.invoke(main, [
            "build-ensemble", "--code", "bch_31_21", "--p", "9", "--out", str(tmp_path / "x"),
        ])
        assert result.exit_code == 2
