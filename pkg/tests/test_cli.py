import pytest

from evhash.cli import main
from evhash.index import db_load


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out


class TestUsageErrors:
    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_missing_required_flag(self, capsys):
        assert main(["query", "--db", "x.vhdb"]) == 1

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0

    def test_data_error_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.fseq"
        bad.write_bytes(b"XXXX" + bytes(30))
        code = main(["ingest", "--in", str(bad),
                     "--out", str(tmp_path / "o.feat")])
        assert code == 2


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> ingest -> stats -> train -> hash -> db: shared artifacts."""
    root = tmp_path_factory.mktemp("pipe")
    data = root / "data"
    assert main(["synth", "--out-dir", str(data), "--seed", "5",
                 "--durations", "8,8,12"]) == 0
    feats = []
    for fseq in sorted(data.glob("*.fseq")):
        feat = data / (fseq.stem + ".feat")
        assert main(["ingest", "--in", str(fseq), "--out", str(feat)]) == 0
        feats.append(str(feat))
    stats = data / "stats.nrm1"
    assert main(["stats", "--out", str(stats), *feats]) == 0
    model = root / "model.mcbn"
    log = root / "loss.csv"
    assert main(["train", "--stats", str(stats), "--out", str(model),
                 "--loss-log", str(log), "--epochs", "2", "--lr", "1e-3",
                 "--batch-size", "3", "--L", "8", "--enc-dims", "8,8,6",
                 "--th", "2", "--seed", "1", *feats]) == 0
    hashes = []
    for feat in feats:
        vh = root / (feat.rsplit("/", 1)[-1][:-5] + ".vh")
        assert main(["hash", "--model", str(model), "--stats", str(stats),
                     "--feat", feat, "--out", str(vh), "--mode", "events",
                     "--th", "2"]) == 0
        hashes.append(str(vh))
    db = root / "db.vhdb"
    assert main(["db-build", "--out", str(db), "--mode", "events",
                 *hashes]) == 0
    return root, data, stats, model, db, feats, hashes


class TestPipeline:
    def test_artifacts_exist(self, pipeline):
        root, data, stats, model, db, feats, hashes = pipeline
        assert (data / "copies.csv").exists()
        assert (data / "corpus.seed.txt").read_text().strip() == "5"
        assert (root / "loss.csv").read_text().startswith("epoch,")
        assert len(db_load(db)) == 3

    def test_query_self_retrieval(self, pipeline, capsys):
        root, data, stats, model, db, feats, hashes = pipeline
        code, out = run(["query", "--db", str(db), "--hash", hashes[0],
                         "--topk", "5"], capsys)
        assert code == 0
        first = out.strip().splitlines()[0].split()
        assert first[0] == "vid0000"
        assert first[1] == "0.000"

    def test_db_add_duplicate_is_data_error(self, pipeline, capsys):
        root, data, stats, model, db, feats, hashes = pipeline
        assert main(["db-add", "--db", str(db), "--hash", hashes[0],
                     "--out", str(root / "db2.vhdb")]) == 2

    def test_dseries(self, pipeline, capsys):
        root, data, stats, model, db, feats, hashes = pipeline
        out_csv = root / "d.csv"
        code, _ = run(["dseries", "--model", str(model), "--stats",
                       str(stats), "--feat", feats[0], "--out", str(out_csv),
                       "--th", "2"], capsys)
        assert code == 0
        lines = out_csv.read_text().strip().splitlines()
        assert lines[0] == "step,d_t,is_event_end"
        assert len(lines) == 25  # M=100 -> M_e=25 -> 24 transitions

    def test_eval_reports(self, pipeline, capsys):
        root, data, stats, model, db, feats, hashes = pipeline
        out_dir = root / "report"
        # restrict to the generated copies for a quick run
        code, out = run(["eval", "--model", str(model), "--stats", str(stats),
                         "--fseq-dir", str(data), "--copies",
                         str(data / "copies.csv"), "--out-dir", str(out_dir),
                         "--th", "2"], capsys)
        assert code == 0
        for name in ("report.csv", "report_slide2mod4.csv", "buckets.csv",
                     "buckets_slide2mod4.csv"):
            assert (out_dir / name).exists()

    def test_idempotent_rerun(self, pipeline):
        root, data, stats, model, db, feats, hashes = pipeline
        model2 = root / "model2.mcbn"
        assert main(["train", "--stats", str(stats), "--out", str(model2),
                     "--epochs", "2", "--lr", "1e-3", "--batch-size", "3",
                     "--L", "8", "--enc-dims", "8,8,6", "--th", "2",
                     "--seed", "1", *feats]) == 0
        assert model.read_bytes() == model2.read_bytes()
