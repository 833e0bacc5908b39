import json

import mock
import pytest

from deqcert import main, tasks


def run(*argv):
    return main.main([str(arg) for arg in argv])


def test_end_to_end(tmpdir, capsys):
    data = tmpdir.join('points.json')
    model = tmpdir.join('model.json')
    standard = tmpdir.join('standard.csv')
    serial = tmpdir.join('srs.csv')
    summary = tmpdir.join('summary')

    assert run('gen-data', 'blobs', '--out={0}'.format(data), '--n-points=40', '--seed=1') == main.SUCCESS
    assert run('train', data, '--out={0}'.format(model), '--epochs=3', '--hidden-dim=4', '--sigma=0.5') == main.SUCCESS
    assert tmpdir.join('model.loss.csv').check()

    common = ['--n-samples=100', '--batch-size=50', '--sigma=0.5', '--max-points=4']
    assert run('certify', model, data, '--out={0}'.format(standard), *common) == main.SUCCESS
    assert run('certify', model, data, '--out={0}'.format(serial), '--mode=srs', '--holdout-k=20',
               '--diagnostic', '--jobs=2', *common) == main.SUCCESS
    assert tmpdir.join('srs.diagnostic.npz').check()

    assert run('report', standard, serial, '--out={0}'.format(summary)) == main.SUCCESS
    metrics = json.loads(summary.join('metrics.json').read())
    assert [report['mode'] for report in metrics['reports']] == ['standard', 'srs']
    assert len(metrics['gap']) == 4

    assert 'Saved task results to' in capsys.readouterr().err


def test_missing_input_exits_with_failure(tmpdir, capsys):
    missing = tmpdir.join('missing.json')
    out = tmpdir.join('model.json')
    assert run('train', missing, '--out={0}'.format(out)) == main.FAILURE

    assert str(missing) in capsys.readouterr().err
    assert not tmpdir.join('model.json.failed').check()


def test_task_errors_leave_a_failure_file(tmpdir):
    data = tmpdir.join('points.json')
    data.write('{not json')
    out = tmpdir.join('model.json')

    assert run('train', data, '--out={0}'.format(out)) == main.FAILURE
    assert 'SchemaError' in tmpdir.join('model.json.failed').read()
    assert not out.check()


def test_unreadable_config_exits_with_failure(tmpdir):
    assert run('gen-data', 'blobs', '--out={0}'.format(tmpdir.join('p.json')),
               '--config={0}'.format(tmpdir.join('missing.yaml'))) == main.FAILURE


def test_usage_errors_exit():
    with pytest.raises(SystemExit):
        run('summon', 'everything')


def test_dry_run_writes_nothing(tmpdir):
    out = tmpdir.join('points.json')
    assert run('gen-data', 'blobs', '--out={0}'.format(out), '--dry-run') == main.SUCCESS
    assert not out.check()


def test_run_task_passes_values():
    with mock.patch.object(tasks.GenDataTask, 'run') as mock_run:
        assert main.run_task(tasks.GenDataTask, out='points.json', dry_run=True, kind='rings') == main.SUCCESS
    mock_run.assert_called_once_with('points.json', True, kind='rings')


def test_training_is_reproducible(tmpdir):
    data = tmpdir.join('points.json')
    assert run('gen-data', 'two_moons', '--out={0}'.format(data), '--n-points=30') == main.SUCCESS

    models = [tmpdir.join('first.json'), tmpdir.join('second.json')]
    for model in models:
        assert run('train', data, '--out={0}'.format(model), '--epochs=2', '--hidden-dim=4') == main.SUCCESS
    assert models[0].read_binary() == models[1].read_binary()


def test_held_out_split(tmpdir):
    data = tmpdir.join('points.json')
    assert run('gen-data', 'blobs', '--out={0}'.format(data), '--n-points=40', '--test-fraction=0.25') == main.SUCCESS

    train = json.loads(data.read())
    test = json.loads(tmpdir.join('points.test.json').read())
    assert (len(train['labels']), len(test['labels'])) == (30, 10)


@pytest.mark.parametrize('argv', [
    ('certify', 'model.json', 'points.json', '--mode=srs', '--n-samples=100', '--holdout-k=500'),
    ('certify', 'model.json', 'points.json', '--sigma=-1'),
    ('gen-data', 'blobs', '--test-fraction=1.5'),
    ('gen-data', 'blobs', '--n-points=lots'),
    ('train', 'points.json', '--epochs=0'),
])
def test_invalid_options_are_usage_errors(tmpdir, argv):
    out = tmpdir.join('out')
    assert run(*(argv + ('--out={0}'.format(out),))) == main.USAGE_ERROR
    assert not tmpdir.join('out.failed').check()
    assert not out.check()
