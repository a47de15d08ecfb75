import json

import numpy as np
import pytest

from lcdm import simkit as sk
from lcdm.morpho import SubjectRecord
from lcdm.study import (
    StudyConfig,
    load_study,
    read_distance_table,
    run_study,
    write_report,
)

from studygen import synthetic_study


@pytest.fixture(scope="module")
def small_study():
    return synthetic_study(seed=3, n_subjects=5, n_per_hemisphere=500)


@pytest.fixture(scope="module")
def small_report(small_study):
    return run_study(small_study, StudyConfig(lilliefors_replicates=100, seed=5))


class TestRunStudy:
    def test_report_structure(self, small_report):
        d = small_report.data
        assert set(d) == {"header", "warnings", "subjects", "measures", "outliers", "pooled"}
        assert d["header"]["groups"] == ["MDD", "HR", "Ctrl"]
        assert set(d["measures"]) == {"volume", "median", "mode", "range", "variance"}
        assert set(d["pooled"]) == {"all_subjects", "outliers_removed"}
        for variant in d["pooled"].values():
            for hemi in ("L", "R"):
                assert len(variant["pairwise"][hemi]["rank"]) == 3
                assert len(variant["cdf"][hemi]) == 3
                for cell in variant["cdf"][hemi]:
                    assert cell["order"] in {
                        "first-stochastically-smaller",
                        "second-stochastically-smaller",
                        "different-no-ordering",
                        "no-difference",
                    }

    def test_byte_identical_reports(self, small_study, small_report):
        again = run_study(
            synthetic_study(seed=3, n_subjects=5, n_per_hemisphere=500),
            StudyConfig(lilliefors_replicates=100, seed=5),
        )
        assert again.to_json() == small_report.to_json()

    def test_holm_dominates_raw_and_is_monotone(self, small_report):
        for variant in small_report.data["pooled"].values():
            for hemi in ("L", "R"):
                for family in ("rank", "t"):
                    cells = variant["pairwise"][hemi][family]
                    for c in cells:
                        assert c["p_holm"] >= c["p"] - 1e-15
                        assert c["p_two_holm"] >= c["p_two"] - 1e-15
                    by_raw = sorted(cells, key=lambda c: c["p"])
                    adj = [c["p_holm"] for c in by_raw]
                    assert adj == sorted(adj)

    def test_pooled_lengths_add_up(self, small_study, small_report):
        all_pool = small_report.data["pooled"]["all_subjects"]
        for hemi in ("L", "R"):
            for group in ("MDD", "HR", "Ctrl"):
                n = all_pool["summary"][hemi][group]["n"]
                expected = sum(
                    s.hemisphere(hemi).size for s in small_study if s.group == group
                )
                assert n == expected

    def test_outlier_removal_variant_drops_flagged(self, small_report):
        d = small_report.data
        for hemi in ("L", "R"):
            for group in ("MDD", "HR", "Ctrl"):
                flagged = set(d["outliers"][hemi][group]["flagged"])
                contributing = set(
                    d["pooled"]["outliers_removed"]["contributing_subjects"][hemi][group]
                )
                assert flagged.isdisjoint(contributing)

    def test_single_group_rejected(self):
        subjects = [
            SubjectRecord("a", "MDD", left=np.arange(5.0), right=np.arange(5.0)),
            SubjectRecord("b", "MDD", left=np.arange(5.0), right=np.arange(5.0)),
        ]
        with pytest.raises(ValueError, match="2 groups"):
            run_study(subjects)

    def test_missing_twin_links_rejected(self):
        subjects = synthetic_study(seed=1, n_subjects=4, n_per_hemisphere=60, twin_links=False)
        with pytest.raises(ValueError, match="twin"):
            run_study(subjects, StudyConfig(lilliefors_replicates=0))

    def test_duplicate_subject_id_rejected(self):
        subjects = [
            SubjectRecord("a", "MDD", left=np.arange(5.0), right=np.arange(5.0)),
            SubjectRecord("a", "Ctrl", left=np.arange(5.0), right=np.arange(5.0)),
        ]
        with pytest.raises(ValueError, match="duplicate"):
            run_study(subjects)

    def test_injected_shift_detected_in_correct_direction(self):
        # Ctrl stretched by r=1.3: pooled MDD and HR distances sit below
        subjects = synthetic_study(
            seed=29,
            n_subjects=6,
            n_per_hemisphere=1200,
            group_params={"Ctrl": sk.AltParams(r=1.3)},
        )
        report = run_study(subjects, StudyConfig(lilliefors_replicates=0))
        cells = report.data["pooled"]["all_subjects"]["pairwise"]["L"]["rank"]
        mdd_ctrl = next(c for c in cells if c["first"] == "MDD" and c["second"] == "Ctrl")
        assert mdd_ctrl["direction"] == "less"
        assert mdd_ctrl["p"] < 0.05


class TestDistanceTableIO:
    def write_table(self, path, rows, twin_col=True):
        header = "subject_id,group,hemisphere,distance_mm"
        if twin_col:
            header += ",twin_pair_id"
        lines = [header]
        for r in rows:
            lines.append(",".join(str(v) for v in r))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def test_roundtrip_and_filtering(self, tmp_path):
        rows = []
        for sid, group, twin in (("s1", "MDD", "p1"), ("s2", "HR", "p1"), ("s3", "Ctrl", "")):
            for hemi in ("L", "R"):
                for value in (-0.7, -0.2, 1.0, 2.0, 5.9):
                    rows.append((sid, group, hemi, value, twin))
        path = tmp_path / "distances.csv"
        self.write_table(path, rows)
        records, trims = load_study(path)
        assert [r.subject_id for r in records] == ["s1", "s2", "s3"]
        s1 = records[0]
        assert list(s1.left) == [-0.2, 1.0, 2.0]
        assert s1.twin_pair_id == "p1"
        assert records[2].twin_pair_id is None
        assert trims["s1"]["L"] == {"kept": 3, "trimmed_below": 1, "trimmed_above": 1}

    def test_group_map(self, tmp_path):
        path = tmp_path / "distances.csv"
        self.write_table(path, [("s1", "dep", "L", 1.0, ""), ("s2", "ctl", "L", 2.0, "")])
        _, groups, _ = read_distance_table(path, group_map={"dep": "MDD", "ctl": "Ctrl"})
        assert groups == {"s1": "MDD", "s2": "Ctrl"}
        with pytest.raises(ValueError, match="group map"):
            read_distance_table(path, group_map={"dep": "MDD"})

    def test_conflicting_group_rejected(self, tmp_path):
        path = tmp_path / "distances.csv"
        self.write_table(path, [("s1", "MDD", "L", 1.0, ""), ("s1", "Ctrl", "R", 2.0, "")])
        with pytest.raises(ValueError, match="groups"):
            read_distance_table(path)

    def test_bad_hemisphere_rejected(self, tmp_path):
        path = tmp_path / "distances.csv"
        self.write_table(path, [("s1", "MDD", "X", 1.0, "")])
        with pytest.raises(ValueError, match="hemisphere"):
            read_distance_table(path)

    def test_missing_columns_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("subject,value\na,1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="columns"):
            read_distance_table(path)


class TestWriteReport:
    def test_emits_json_and_tables(self, tmp_path, small_report):
        written = write_report(small_report, tmp_path / "out")
        names = {p.name for p in written}
        assert "report.json" in names
        assert "table6_pooled_pairwise.csv" in names
        assert "table8_pooled_cdf.csv" in names
        parsed = json.loads((tmp_path / "out" / "report.json").read_text())
        assert parsed["header"]["n_subjects"] == 15
        table6 = (tmp_path / "out" / "table6_pooled_pairwise.csv").read_text().splitlines()
        assert table6[0].startswith("variant,hemisphere,first,second,method")
        # 2 variants x 2 hemis x 2 methods x 3 pairs
        assert len(table6) == 1 + 24
