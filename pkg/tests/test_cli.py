import json
import os

import numpy as np
import pytest

from conftest import EXAMPLE3_VALUE, ROOT, problem_path
from core.errors import ProblemFileError
from scripts.po4_cli import (
    EXIT_INFEASIBLE,
    EXIT_INPUT,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_UNBOUNDED,
    exit_code_for,
    json_ready,
    main,
)
from storage.problem_file import ProblemFile

GOLDEN_KEYS = os.path.join(ROOT, 'tests', 'golden', 'report_keys.json')


def run_json(capsys, *argv):
    code = main(list(argv) + ['--json'])
    out = capsys.readouterr().out
    return code, json.loads(out)


class TestProblemFile:

    def test_defaults(self):
        doc = ProblemFile.parse('{"n": 1, "f": {"A": [[1]]}, "g": {"A": [[2]], "a0": -1}}')
        p = doc.problem
        assert p.m == 0
        assert p.F.is_squared_norm
        assert p.g.a0 == -1.0
        assert np.array_equal(p.f.a, [0.0])

    def test_field_path_and_line(self):
        text = '{\n  "n": 2,\n  "f": {"A": [[1, 0], [0, 1]]},\n  "g": {"A": [[1, 0]]}\n}'
        with pytest.raises(ProblemFileError) as info:
            ProblemFile.parse(text)
        assert info.value.field_path == "g.A"
        assert info.value.line == 4

    def test_syntax_error_has_line(self):
        with pytest.raises(ProblemFileError) as info:
            ProblemFile.parse('{\n  "n": 2,\n  "f": \n}')
        assert info.value.line == 4

    def test_rejects_non_numeric_entries(self):
        with pytest.raises(ProblemFileError) as info:
            ProblemFile.parse('{"n": 1, "f": {"A": [["x"]]}, "g": {"A": [[1]]}}')
        assert info.value.field_path == "f.A[0][0]"

    def test_rejects_bad_dimension(self):
        with pytest.raises(ProblemFileError):
            ProblemFile.parse('{"n": 0, "f": {"A": []}, "g": {"A": []}}')

    @pytest.mark.parametrize("name", ['example3', 'unattained', 'gtrs', 'dwp'])
    def test_dump_round_trip(self, name):
        doc = ProblemFile.load(problem_path(name))
        again = ProblemFile.parse(doc.dumps())
        assert again.problem.same_as(doc.problem)
        assert again.name == doc.name


class TestExitCodes:

    def test_status_mapping(self):
        assert exit_code_for('Optimal') == EXIT_OK
        assert exit_code_for('Unbounded') == EXIT_UNBOUNDED
        assert exit_code_for('Infeasible') == EXIT_INFEASIBLE
        assert exit_code_for('NumericalTrouble') == EXIT_NUMERICAL
        assert exit_code_for('RelaxationGap') == EXIT_NUMERICAL

    def test_json_ready(self):
        assert json_ready({'a': float('inf'), 'b': [float('-inf'), float('nan'), 1.5]}) == \
            {'a': "inf", 'b': ["-inf", None, 1.5]}


class TestCommands:

    def test_value_example3(self, capsys):
        code, report = run_json(capsys, 'value', problem_path('example3'))
        assert code == EXIT_OK
        assert report['status'] == "Optimal"
        assert report['value'] == pytest.approx(EXAMPLE3_VALUE, abs=5e-3)
        assert set(report['certificate']) == {'gamma', 'alpha', 'beta', 'mu'}

    def test_value_unbounded(self, capsys):
        code = main(['value', problem_path('unbounded')])
        out = capsys.readouterr().out
        assert code == EXIT_UNBOUNDED
        assert out.splitlines()[0] == "UNBOUNDED"

    def test_malformed_file(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"n": 2, "f": {"A": [[1, 0], [0, 1]]}, "g": {"A": [[1, 0], [0]]}}')
        code = main(['value', str(bad)])
        err = capsys.readouterr().err
        assert code == EXIT_INPUT
        assert "g.A[1]" in err

    def test_missing_file(self, capsys, tmp_path):
        assert main(['value', str(tmp_path / "absent.json")]) == EXIT_INPUT

    def test_solve_unattained(self, capsys):
        code, report = run_json(capsys, 'solve', problem_path('unattained'))
        assert report['value'] == pytest.approx(0.0, abs=1e-4)
        if not report['recovered']:
            assert report['message'].startswith("RECOVERY FAILED (possible non-attainment)")
        assert code == EXIT_OK

    def test_solve_iterations_within_bound(self, capsys):
        code, report = run_json(capsys, 'solve', problem_path('qsic_independent'), '--epsilon', '1e-3')
        assert code == EXIT_OK
        if report['k_star'] is not None:
            assert report['iterations'] <= report['k_star']
        if report['recovered']:
            assert report['quality'] <= 1e-3 + 1e-4

    def test_qsic_decisions(self, capsys):
        code = main(['qsic', problem_path('spheres_touching'), '--rho', '1e-6'])
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert out.splitlines()[0] == "INTERSECT"

        code, report = run_json(capsys, 'qsic', problem_path('spheres_disjoint'))
        assert report['decision'] == "DISJOINT"
        assert report['value'] == pytest.approx(3.125, abs=1e-3)

    def test_aqp_example(self, capsys):
        code, report = run_json(capsys, 'aqp', problem_path('aqp_example'))
        assert code == EXIT_OK
        assert report['value'] == pytest.approx(0.0, abs=1e-6)
        assert report['kkt_branch'] == "BothZero"
        assert report['x'] == pytest.approx([1.0, 0.0], abs=1e-4)

    def test_aqp_text_lists_branches(self, capsys):
        main(['aqp', problem_path('aqp_example')])
        out = capsys.readouterr().out
        assert "branch MuPositive: rejected" in out
        assert "branch BothZero: accepted" in out
        assert "branch Lambda1Only: rejected" in out

    def test_range_csv(self, capsys, tmp_path):
        out = tmp_path / "cloud.csv"
        code = main(['range', problem_path('example1'), '--box', '2', '--count', '500',
                     '--seed', '7', '--out', str(out)])
        assert code == EXIT_OK
        rows = np.loadtxt(out, delimiter=',', skiprows=1)
        assert rows.shape == (500, 4)
        assert np.all(rows[:, 3] >= -2.0 * rows[:, 2] ** 2 - 1e-9)

    def test_range_is_deterministic(self, capsys, tmp_path):
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (first, second):
            main(['range', problem_path('example1'), '--count', '50', '--seed', '7', '--out', str(path)])
        assert first.read_bytes() == second.read_bytes()

    def test_range_rejects_zero_count(self, capsys, tmp_path):
        code = main(['range', problem_path('example1'), '--count', '0', '--out', str(tmp_path / "x.csv")])
        assert code == EXIT_INPUT

    def test_dump(self, capsys):
        assert main(['value', problem_path('example3'), '--dump']) == EXIT_OK
        dumped = capsys.readouterr().out
        original = ProblemFile.load(problem_path('example3')).problem
        assert ProblemFile.parse(dumped).problem.same_as(original)

    def test_report_keys_match_golden(self, capsys, tmp_path):
        with open(GOLDEN_KEYS, 'r', encoding='utf-8') as fh:
            golden = json.load(fh)
        runs = {
            'value': ['value', problem_path('example3')],
            'solve': ['solve', problem_path('example3')],
            'qsic': ['qsic', problem_path('spheres_disjoint')],
            'aqp': ['aqp', problem_path('aqp_example')],
            'range': ['range', problem_path('example1'), '--count', '10', '--out', str(tmp_path / "r.csv")],
        }
        for command, argv in runs.items():
            _, report = run_json(capsys, *argv)
            assert list(report) == golden[command], command
            assert {'status', 'value', 'elapsed_ms'} <= set(report)
