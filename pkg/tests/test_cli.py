import json

from click.testing import CliRunner

from crowdsynth import io
from crowdsynth.cli import main
from crowdsynth.geometry import BBox
from crowdsynth.odnms import Detection

from conftest import make_scene


def write_inputs(tmp_path, small_library, base_scene, n_scenes=3):
    anns = tmp_path / "anns.json"
    scenes = [base_scene for _ in range(n_scenes)]
    io.save_annotations(scenes, anns)
    lib_dir = tmp_path / "patches"
    io.save_patch_library(small_library, lib_dir)
    return anns, lib_dir


class TestSynth:
    def test_n_zero_is_semantic_identity(self, tmp_path, small_library, base_scene):
        anns, lib_dir = write_inputs(tmp_path, small_library, base_scene)
        out = tmp_path / "aug.json"
        result = CliRunner().invoke(main, [
            "synth", "--in", str(anns), "--patches", str(lib_dir),
            "--out", str(out), "--seed", "1", "--max-groups", "0",
        ])
        assert result.exit_code == 0, result.output
        scenes, _ = io.load_annotations(out)
        for scene in scenes:
            assert len(scene.instances) == len(base_scene.instances)
            for a, b in zip(scene.instances, base_scene.instances):
                assert a.bbox.as_tuple() == b.bbox.as_tuple()

    def test_byte_identical_reruns(self, tmp_path, small_library, base_scene):
        anns, lib_dir = write_inputs(tmp_path, small_library, base_scene)
        outs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            result = CliRunner().invoke(main, [
                "synth", "--in", str(anns), "--patches", str(lib_dir),
                "--out", str(out), "--pairs-out", str(tmp_path / ("p" + name)),
                "--seed", "7",
            ])
            assert result.exit_code == 0, result.output
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        assert (tmp_path / "pa.json").read_bytes() == (tmp_path / "pb.json").read_bytes()

    def test_jobs_do_not_change_output(self, tmp_path, small_library, base_scene):
        anns, lib_dir = write_inputs(tmp_path, small_library, base_scene, n_scenes=4)
        blobs = []
        for jobs, name in ((1, "j1.json"), (3, "j3.json")):
            out = tmp_path / name
            result = CliRunner().invoke(main, [
                "synth", "--in", str(anns), "--patches", str(lib_dir),
                "--out", str(out), "--seed", "11", "--jobs", str(jobs),
            ])
            assert result.exit_code == 0, result.output
            blobs.append(out.read_bytes())
        assert blobs[0] == blobs[1]

    def test_config_file_flag_precedence(self, tmp_path, small_library, base_scene):
        anns, lib_dir = write_inputs(tmp_path, small_library, base_scene)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"synthesis": {"max_groups": 2, "sigma": 0.1}}))
        out = tmp_path / "aug.json"
        result = CliRunner().invoke(main, [
            "synth", "--in", str(anns), "--patches", str(lib_dir),
            "--out", str(out), "--config", str(cfg), "--max-groups", "0",
        ])
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        assert doc["synthesis"]["config"]["max_groups"] == 0  # flag wins
        assert doc["synthesis"]["config"]["sigma"] == 0.1


class TestNmsCommands:
    def write_dets(self, tmp_path):
        d = 10.0 * (1 - 0.6) / (1 + 0.6)  # IoU 0.6
        dets = {0: [
            Detection(BBox(0, 0, 10, 10), 0.9, 1.0),
            Detection(BBox(d, 0, 10 + d, 10), 0.8, 2.2),
        ]}
        path = tmp_path / "dets.json"
        io.save_detections(dets, path)
        return path

    def test_odnms_cancels_suppression(self, tmp_path):
        path = self.write_dets(tmp_path)
        out = tmp_path / "kept.json"
        idx = tmp_path / "idx.json"
        result = CliRunner().invoke(main, [
            "odnms", "--dets", str(path), "--th-iou", "0.5",
            "--delta", "0.001", "--psi", "10",
            "--out", str(out), "--indices-out", str(idx),
        ])
        assert result.exit_code == 0, result.output
        assert json.loads(idx.read_text())["kept"]["0"] == [0, 1]

    def test_plain_nms_suppresses(self, tmp_path):
        path = self.write_dets(tmp_path)
        out = tmp_path / "kept.json"
        idx = tmp_path / "idx.json"
        result = CliRunner().invoke(main, [
            "nms", "--dets", str(path), "--th-iou", "0.5",
            "--out", str(out), "--indices-out", str(idx),
        ])
        assert result.exit_code == 0, result.output
        assert json.loads(idx.read_text())["kept"]["0"] == [0]

    def test_zero_delta_is_usage_error(self, tmp_path):
        path = self.write_dets(tmp_path)
        result = CliRunner().invoke(main, [
            "odnms", "--dets", str(path), "--delta", "0",
            "--out", str(tmp_path / "x.json"),
        ])
        assert result.exit_code == 2
        assert "delta > 0" in result.output

    def test_unknown_flag_rejected(self, tmp_path):
        result = CliRunner().invoke(main, ["nms", "--bogus", "1"])
        assert result.exit_code == 2


class TestPipelines:
    def test_simulate_then_eval(self, tmp_path, small_library, base_scene):
        anns, lib_dir = write_inputs(tmp_path, small_library, base_scene, n_scenes=2)
        aug = tmp_path / "aug.json"
        runner = CliRunner()
        assert runner.invoke(main, [
            "synth", "--in", str(anns), "--patches", str(lib_dir),
            "--out", str(aug), "--seed", "3",
        ]).exit_code == 0
        dets = tmp_path / "dets.json"
        assert runner.invoke(main, [
            "simulate", "--in", str(aug), "--out", str(dets), "--seed", "4",
            "--proposals", "2",
        ]).exit_code == 0
        result = runner.invoke(main, [
            "eval", "--dets", str(dets), "--gt", str(aug),
            "--out", str(tmp_path / "metrics.csv"),
        ])
        assert result.exit_code == 0, result.output
        assert "AP@0.5" in result.output
        assert (tmp_path / "metrics.csv").exists()

    def test_icd_report(self, tmp_path, small_library, base_scene):
        anns, lib_dir = write_inputs(tmp_path, small_library, base_scene, n_scenes=2)
        aug = tmp_path / "aug.json"
        runner = CliRunner()
        assert runner.invoke(main, [
            "synth", "--in", str(anns), "--patches", str(lib_dir),
            "--out", str(aug), "--seed", "5",
        ]).exit_code == 0
        csv_out = tmp_path / "icd.csv"
        result = runner.invoke(main, [
            "icd", "--in", str(aug), "--out", str(csv_out),
            "--seed", "6", "--noise-base", "0.02",
        ])
        assert result.exit_code == 0, result.output
        header = csv_out.read_text().splitlines()[0]
        assert header == "band,bin,iou_lo,count,mean,std"
        assert len(csv_out.read_text().splitlines()) == 1 + 300

    def test_recall_exp_report(self, tmp_path, small_library, base_scene):
        anns, lib_dir = write_inputs(tmp_path, small_library, base_scene, n_scenes=2)
        aug = tmp_path / "aug.json"
        runner = CliRunner()
        assert runner.invoke(main, [
            "synth", "--in", str(anns), "--patches", str(lib_dir),
            "--out", str(aug), "--seed", "8",
        ]).exit_code == 0
        out = tmp_path / "recall.csv"
        result = runner.invoke(main, [
            "recall-exp", "--in", str(aug), "--out", str(out), "--seed", "9",
        ])
        assert result.exit_code == 0, result.output
        body = out.read_text()
        for key in ("recall_nms", "recall_odnms", "ap_nms", "ap_odnms"):
            assert key in body

    def test_render(self, tmp_path, small_library, base_scene):
        anns, lib_dir = write_inputs(tmp_path, small_library, base_scene, n_scenes=1)
        aug = tmp_path / "aug.json"
        runner = CliRunner()
        assert runner.invoke(main, [
            "synth", "--in", str(anns), "--patches", str(lib_dir),
            "--out", str(aug), "--seed", "10",
        ]).exit_code == 0
        png = tmp_path / "scene.png"
        result = runner.invoke(main, [
            "render", "--in", str(aug), "--patches", str(lib_dir),
            "--out", str(png),
        ])
        assert result.exit_code == 0, result.output
        assert png.stat().st_size > 0

    def test_missing_input_file(self, tmp_path):
        result = CliRunner().invoke(main, [
            "simulate", "--in", str(tmp_path / "absent.json"),
            "--out", str(tmp_path / "o.json"),
        ])
        assert result.exit_code == 2
        assert "absent.json" in result.output
