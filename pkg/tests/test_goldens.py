import json
import shutil

from healthinvest.goldens import CORPUS_DIR, MANIFEST, load_suite, regenerate_goldens


def test_corpus_regenerates_without_drift():
    report = regenerate_goldens()
    assert report.ok, report.drifts
    assert report.digest_changed == []
    assert set(report.checked) == {c.name for c in load_suite()}


def test_changing_steps_drifts_only_that_boundary_case():
    report = regenerate_goldens(overrides={"boundary_n50": {"n_steps": 60}})
    assert report.drifting_cases() == {"boundary_n50"}


def test_perturbed_corpus_drifts_and_wider_tolerance_absorbs(tmp_path):
    corpus = tmp_path / "corpus"
    shutil.copytree(CORPUS_DIR, corpus)
    suite = [c for c in load_suite(corpus) if c.name == "boundary_trapezoid_n40"]
    path = corpus / suite[0].filename
    lines = path.read_text().splitlines()
    header = next(i for i, l in enumerate(lines) if not l.startswith("#"))
    cols = lines[header].split(",")
    j = cols.index("b_dual")
    row = lines[header + 10].split(",")
    row[j] = repr(float(row[j]) * (1 + 1e-7))
    lines[header + 10] = ",".join(row)
    path.write_text("\n".join(lines) + "\n")
    report = regenerate_goldens(suite, corpus)
    assert report.drifting_cases() == {"boundary_trapezoid_n40"}
    assert report.digest_changed == ["boundary_trapezoid_n40"]
    assert regenerate_goldens(suite, corpus, tolerance_scale=1e3).ok


def test_manifest_lists_every_file():
    data = json.loads((CORPUS_DIR / MANIFEST).read_text())
    for case in data["cases"]:
        assert (CORPUS_DIR / f"{case['name']}.csv").exists()
        assert case["tolerance"]
