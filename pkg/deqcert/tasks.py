# pylint: disable=missing-docstring

from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import asdict
import logging
import os
import sys
import traceback

from deqcert.config import (
    gen_data_options_from_values, smoothing_config_from_values, solver_config_from_values, srs_config_from_values,
    thresholds_from_values, train_config_from_values,
)
from deqcert.datasets import check_options, gen_data, split_dataset
from deqcert.deqcore import init_model
from deqcert.evaluation import (
    MODES, ReportRow, check_headers_aligned, check_rows_aligned, gap_histogram, paired_rrd, pm_gap,
    rrd_histogram, summarize,
)
from deqcert.exceptions import ArgumentError, CertificationFailed
from deqcert import files
from deqcert.smoothing import certify_standard, warn_on_sigma_mismatch
from deqcert.srs import srs_certify
from deqcert.training import clean_accuracy, train


log = logging.getLogger(__name__)

REPORT_FORMAT = 'deqcert-report'


class FatalTaskError(Exception):
    """Exception marking tasks that should be treated as fatal."""
    pass


def _require_files(*filenames):
    for filename in filenames:
        if not filename or not os.path.isfile(filename):
            raise FatalTaskError('Input file not found: {0}'.format(filename))


class Task(object):
    """ Base class for all Task. """
    NAME = None

    @classmethod
    def check_values(cls, values):
        """Build the typed configuration a run needs; raises ArgumentError on bad options."""
        pass

    @classmethod
    def run(cls, filename, dry_run, **kwargs):
        raise NotImplementedError

    @classmethod
    def write_failed_file(cls, filename):
        if os.path.isfile(filename):
            os.remove(filename)

        failed_filename = filename + '.failed'
        directory = os.path.dirname(os.path.abspath(failed_filename))
        if not os.path.isdir(directory):
            os.makedirs(directory)
        with open(failed_filename, 'w') as failure_file:
            # If the issue at hand is related to a raised exception,
            # then we can print the last exception into the file.
            # Otherwise, we resort to a generic message.
            exc_type, exc_value, exc_tb = sys.exc_info()
            if all([exc_type, exc_value, exc_tb]):
                traceback.print_exception(exc_type, exc_value, exc_tb, file=failure_file)
            else:
                failure_file.write('An error occurred generating this file.\n')

        return failed_filename


class GenDataTask(Task):
    NAME = 'gen-data'

    @classmethod
    def test_filename(cls, filename, **kwargs):
        return kwargs.get('test_out') or os.path.splitext(filename)[0] + '.test.json'

    @classmethod
    def check_values(cls, values):
        options = gen_data_options_from_values(values)
        check_options(options['kind'], options['n_points'], options['noise'], options['num_classes'],
                      options['dim'])
        return options

    @classmethod
    def run(cls, filename, dry_run, **kwargs):
        options = cls.check_values(kwargs)
        test_fraction = options.pop('test_fraction')
        if dry_run:
            log.info('Would generate %d %s points into %s', options['n_points'], options['kind'], filename)
            return

        data = gen_data(**options)
        if not test_fraction:
            files.save_dataset(data, filename)
            return

        train_data, test_data = split_dataset(data, test_fraction)
        files.save_dataset(train_data, filename)
        test_filename = cls.test_filename(filename, **kwargs)
        files.save_dataset(test_data, test_filename)
        log.info('Saved %d training points to %s and %d held-out points to %s',
                 len(train_data), filename, len(test_data), test_filename)


class TrainTask(Task):
    NAME = 'train'

    @classmethod
    def loss_filename(cls, filename, **kwargs):
        return kwargs.get('loss_out') or os.path.splitext(filename)[0] + '.loss.csv'

    @classmethod
    def check_values(cls, values):
        return train_config_from_values(values)

    @classmethod
    def run(cls, filename, dry_run, **kwargs):
        _require_files(kwargs['dataset'])
        cfg = cls.check_values(kwargs)
        data = files.load_dataset(kwargs['dataset'])

        model = init_model(data.dim, int(kwargs['hidden_dim']), data.num_classes,
                           gamma=float(kwargs['gamma']), seed=cfg.seed)
        if dry_run:
            log.info('Would train on %d points for %d epochs into %s', len(data), cfg.epochs, filename)
            return

        model, trace = train(model, data, cfg)
        log.info('Clean training accuracy: %.4f', clean_accuracy(model, data, cfg.solver))

        files.save_model(model, filename)
        loss_filename = cls.loss_filename(filename, **kwargs)
        files.save_loss_trace(trace, loss_filename)
        log.info('Saved loss trace to %s', loss_filename)


def select_points(count, skip=1, max_points=None):
    """Indices of every `skip`-th point, at most `max_points` of them."""
    skip = int(skip or 1)
    if skip < 1:
        raise FatalTaskError('skip must be >= 1')
    indices = list(range(0, count, skip))
    if max_points is not None:
        indices = indices[:int(max_points)]
    return indices


def report_header(mode, values, smoothing, solver, srs=None, model=None, points=()):
    header = {
        'format': REPORT_FORMAT,
        'mode': mode,
        'model': values['model'],
        'dataset': values['dataset'],
        'sigma': smoothing.sigma,
        'n_samples': smoothing.n_samples,
        'batch_size': smoothing.batch_size,
        'alpha': smoothing.confidence.alpha,
        'alpha_tilde': smoothing.confidence.alpha_tilde,
        'seed': smoothing.seed,
        'solver': asdict(solver),
        'skip': int(values.get('skip') or 1),
        'max_points': values.get('max_points') and int(values['max_points']),
        'points': len(points),
        'sigma_train': getattr(model, 'sigma_train', None),
    }
    if srs is not None:
        header['srs'] = {
            'srs_steps': srs.srs_steps,
            'warmup_steps': srs.warmup_steps,
            'restart_interval': srs.restart_interval,
            'holdout_k': srs.holdout_k,
            'start_from_clean': srs.start_from_clean,
            'reference_solver': asdict(srs.reference_solver),
            'warmup_solver': asdict(srs.warmup_solver) if srs.warmup_solver else None,
        }
    return header


def certify_point(model, data, point_index, mode, cfg, solver, diagnostic=False):
    """Certify one dataset point; returns its report row and its diagnostics, if any."""
    x, label = data.inputs[point_index], int(data.labels[point_index])
    try:
        if mode == 'srs':
            outcome = srs_certify(model, x, cfg, point_index=point_index, diagnostic=diagnostic)
        else:
            outcome = certify_standard(model, x, cfg, solver, point_index=point_index)
    except CertificationFailed as e:
        log.exception('Certification of point %d failed', point_index)
        return ReportRow.failed(point_index, label, mode, e), None

    row = ReportRow.from_outcome(point_index, label, mode, outcome)
    log.info('Point %d: label=%d predicted=%d radius=%.4f (%.2fs)',
             point_index, label, row.predicted, row.radius, row.wall_time)

    extra = None
    if diagnostic and mode == 'srs':
        extra = (outcome.sample_predictions, outcome.reference_predictions, outcome.top_class, outcome.pm_upper)
    return row, extra


class CertifyTask(Task):
    NAME = 'certify'

    @classmethod
    def check_values(cls, values):
        """Returns the (solver, smoothing, srs) configurations; srs is None in standard mode."""
        mode = values.get('mode')
        if mode not in MODES:
            raise ArgumentError('Unknown mode {0!r}, expected one of {1}'.format(mode, MODES))
        solver = solver_config_from_values(values)
        smoothing = smoothing_config_from_values(values)
        srs = srs_config_from_values(values) if mode == 'srs' else None
        return solver, smoothing, srs

    @classmethod
    def run(cls, filename, dry_run, **kwargs):
        _require_files(kwargs['model'], kwargs['dataset'])
        mode = kwargs['mode']
        if mode not in MODES:
            raise FatalTaskError('Unknown mode {0!r}, expected one of {1}'.format(mode, MODES))

        model = files.load_model(kwargs['model'])
        data = files.load_dataset(kwargs['dataset'])

        solver, smoothing, srs = cls.check_values(kwargs)
        cfg = srs if srs is not None else smoothing
        diagnostic = bool(kwargs.get('diagnostic'))
        jobs = max(1, int(kwargs.get('jobs') or 1))

        warn_on_sigma_mismatch(model, smoothing.sigma)
        points = select_points(len(data), kwargs.get('skip'), kwargs.get('max_points'))
        header = report_header(mode, kwargs, smoothing, solver, srs, model, points)

        if dry_run:
            log.info('Would certify %d points in %s mode into %s', len(points), mode, filename)
            return

        def certify(point_index):
            return certify_point(model, data, point_index, mode, cfg, solver, diagnostic)

        diagnostics = {}
        with files.open_output(filename) as output_file:
            writer = files.ReportWriter(output_file, header)
            with ThreadPoolExecutor(max_workers=jobs) as executor:
                # results come back in point order and are written from this thread only
                for point_index, (row, extra) in zip(points, executor.map(certify, points)):
                    writer.write(row)
                    if extra is not None:
                        diagnostics[point_index] = extra

        if diagnostics:
            diagnostic_filename = files.diagnostic_filename(filename)
            files.save_diagnostics(diagnostic_filename, diagnostics)
            log.info('Saved per-sample diagnostics to %s', diagnostic_filename)


def report_gaps(srs_filename, srs_rows):
    diagnostic_filename = files.diagnostic_filename(srs_filename)
    if not os.path.isfile(diagnostic_filename):
        log.info('No diagnostics next to %s, skipping the p_m gap', srs_filename)
        return None

    diagnostics = files.load_diagnostics(diagnostic_filename)
    gaps = []
    for row in srs_rows:
        if row.status != 'ok' or row.point_index not in diagnostics:
            continue
        serial, reference, _, _ = diagnostics[row.point_index]
        gaps.append(pm_gap(row, reference, serial))
    return gaps


def _write_accuracy_table(filename, labels, summaries):
    thresholds = summaries[0]['thresholds']
    with files.open_output(filename) as output_file:
        writer = csv.writer(output_file, lineterminator='\n')
        writer.writerow(['threshold'] + labels)
        for position, threshold in enumerate(thresholds):
            writer.writerow([repr(float(threshold))] +
                            [repr(summary['certified_accuracy'][position]) for summary in summaries])


class ReportTask(Task):
    NAME = 'report'

    @classmethod
    def check_values(cls, values):
        return thresholds_from_values(values)

    @classmethod
    def run(cls, filename, dry_run, **kwargs):
        report_filenames = kwargs['report']
        _require_files(*report_filenames)
        thresholds = cls.check_values(kwargs)

        reports = [files.read_report(report_filename) for report_filename in report_filenames]
        if dry_run:
            log.info('Would summarize %d reports into %s', len(reports), filename)
            return

        summaries = []
        for position, (report_filename, (header, rows)) in enumerate(zip(report_filenames, reports)):
            summary = summarize(rows, thresholds)
            summary.update(path=report_filename, mode=header.get('mode'))
            summaries.append(summary)
            if 'pm_histogram' in summary:
                files.save_histogram(summary['pm_histogram'],
                                     os.path.join(filename, 'pm_histogram_{0}.csv'.format(position)))

        metrics = {'thresholds': list(thresholds), 'reports': summaries}

        if len(reports) == 2:
            (header_a, rows_a), (header_b, rows_b) = reports
            check_headers_aligned(header_a, header_b)
            check_rows_aligned(rows_a, rows_b)

            base_position = 1 if header_a.get('mode') == 'srs' and header_b.get('mode') != 'srs' else 0
            base_rows, other_rows = (rows_a, rows_b) if base_position == 0 else (rows_b, rows_a)
            values = paired_rrd(base_rows, other_rows)
            metrics['rrd'] = values
            metrics['rrd_histogram'] = rrd_histogram(values)
            files.save_histogram(metrics['rrd_histogram'], os.path.join(filename, 'rrd_histogram.csv'))

            srs_position = 1 - base_position
            if reports[srs_position][0].get('mode') == 'srs':
                gaps = report_gaps(report_filenames[srs_position], reports[srs_position][1])
                if gaps:
                    metrics['gap'] = gaps
                    metrics['gap_histogram'] = gap_histogram(gaps)
                    files.save_histogram(metrics['gap_histogram'], os.path.join(filename, 'gap_histogram.csv'))

        labels = ['{0}:{1}'.format(position, summary['mode']) for position, summary in enumerate(summaries)]
        _write_accuracy_table(os.path.join(filename, 'certified_accuracy.csv'), labels, summaries)
        files.save_metrics(metrics, os.path.join(filename, 'metrics.json'))

        for summary in summaries:
            log.info('%s (%s): ACR %.4f, certified accuracy %s', summary['path'], summary['mode'], summary['acr'],
                     ', '.join('{0:.3f}'.format(value) for value in summary['certified_accuracy']))


TASKS = {task.NAME: task for task in (GenDataTask, TrainTask, CertifyTask, ReportTask)}
