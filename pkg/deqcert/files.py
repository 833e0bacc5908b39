"""
Readers and writers for every file deqcert produces or consumes.

Model and dataset files are versioned JSON documents. Reports are CSV with
a JSON header block written as '# '-prefixed comment lines, so that both
people and tools can read them.
"""

from contextlib import contextmanager
import csv
import io
import json
import logging
import os

import numpy as np

from deqcert.deqcore import make_model
from deqcert.evaluation import ReportRow
from deqcert.exceptions import IoError, SchemaError
from deqcert.training import Dataset
from deqcert.util import atomic_output


log = logging.getLogger(__name__)

MODEL_VERSION = 1
DATASET_VERSION = 1
REPORT_VERSION = 1

HEADER_PREFIX = '# '

REPORT_COLUMNS = (
    'point_index', 'true_label', 'predicted', 'radius', 'mode', 'counts', 'top_class', 'p_a_lower',
    'pm_upper', 'n_a', 'n_a_effective', 'wall_time', 'iters_total', 'iters_saved', 'status', 'error',
)

_INT_COLUMNS = ('point_index', 'true_label', 'predicted', 'top_class', 'n_a', 'n_a_effective',
                'iters_total', 'iters_saved')
_FLOAT_COLUMNS = ('radius', 'p_a_lower', 'pm_upper', 'wall_time')


@contextmanager
def open_output(filename):
    """Open `filename` for writing through a temporary file; OS errors become IoError."""
    try:
        with atomic_output(filename) as temp_path:
            with open(temp_path, 'w', newline='') as output_file:
                yield output_file
    except IoError:
        raise
    except OSError as e:
        raise IoError('Cannot write {0}: {1}'.format(filename, e))


def _load_json(filename):
    try:
        with open(filename) as input_file:
            return json.load(input_file)
    except OSError as e:
        raise IoError('Cannot read {0}: {1}'.format(filename, e))
    except ValueError as e:
        raise SchemaError('{0} is not valid JSON: {1}'.format(filename, e))


def _check_version(document, expected, filename):
    version = document.get('version') if isinstance(document, dict) else None
    if version != expected:
        raise SchemaError('{0} has unsupported version {1!r} (expected {2})'.format(filename, version, expected))


def _dump_json(document, filename):
    with open_output(filename) as output_file:
        json.dump(document, output_file, sort_keys=True, indent=1)
        output_file.write('\n')


# Models

def model_to_document(model):
    return {
        'version': MODEL_VERSION,
        'hidden_dim': model.hidden_dim,
        'input_dim': model.input_dim,
        'num_classes': model.num_classes,
        'gamma': model.cell.gamma,
        'sigma_train': model.sigma_train,
        'W': model.cell.W.tolist(),
        'U': model.cell.U.tolist(),
        'b': model.cell.b.tolist(),
        'V': model.readout.V.tolist(),
        'c': model.readout.c.tolist(),
    }


def model_from_document(document, filename='<model>'):
    _check_version(document, MODEL_VERSION, filename)
    try:
        model = make_model(document['W'], document['U'], document['b'], document['V'], document['c'],
                           gamma=document['gamma'], sigma_train=document['sigma_train'])
    except KeyError as e:
        raise SchemaError('{0} is missing field {1}'.format(filename, e))

    declared = (document.get('hidden_dim'), document.get('input_dim'), document.get('num_classes'))
    if declared != (model.hidden_dim, model.input_dim, model.num_classes):
        raise SchemaError('{0} declares dimensions {1} but stores {2}'.format(
            filename, declared, (model.hidden_dim, model.input_dim, model.num_classes)))
    return model


def save_model(model, filename):
    _dump_json(model_to_document(model), filename)


def load_model(filename):
    return model_from_document(_load_json(filename), filename)


# Datasets

def save_dataset(data, filename):
    _dump_json({
        'version': DATASET_VERSION,
        'dim': data.dim,
        'num_classes': data.num_classes,
        'inputs': data.inputs.tolist(),
        'labels': [int(label) for label in data.labels],
    }, filename)


def load_dataset(filename):
    document = _load_json(filename)
    _check_version(document, DATASET_VERSION, filename)
    try:
        inputs = np.asarray(document['inputs'], dtype=np.float64).reshape(-1, document['dim'])
        labels = np.asarray(document['labels'], dtype=np.int64)
        return Dataset(inputs=inputs, labels=labels, num_classes=int(document['num_classes']))
    except (KeyError, ValueError) as e:
        raise SchemaError('{0} is not a valid dataset: {1}'.format(filename, e))


# Loss traces

def save_loss_trace(trace, filename):
    with open_output(filename) as output_file:
        writer = csv.writer(output_file, lineterminator='\n')
        writer.writerow(('epoch', 'step', 'loss', 'truncated'))
        for record in trace:
            writer.writerow((record.epoch, record.step, repr(float(record.loss)), int(record.truncated)))


# Reports

class ReportWriter(object):
    """
    Streams report rows to a CSV file after its JSON header block.

    Rows are written by one writer only; callers certifying points
    concurrently hand finished rows to `write`.
    """

    def __init__(self, output_file, header):
        self.output_file = output_file
        header = dict(header, version=REPORT_VERSION)
        for line in json.dumps(header, sort_keys=True, indent=2).splitlines():
            output_file.write(HEADER_PREFIX + line + '\n')
        self.writer = csv.writer(output_file, lineterminator='\n')
        self.writer.writerow(REPORT_COLUMNS)

    def write(self, row):
        self.writer.writerow([self._normalize_value(column, getattr(row, column)) for column in REPORT_COLUMNS])

    @staticmethod
    def _normalize_value(column, value):
        if value is None:
            return ''
        if column == 'counts':
            return ' '.join(str(int(count)) for count in value)
        if isinstance(value, float):
            return repr(value)
        return str(value).replace('\r', ' ').replace('\n', ' ')


def _parse_value(column, text):
    if column == 'counts':
        return tuple(int(count) for count in text.split())
    if text == '':
        return None
    if column in _INT_COLUMNS:
        return int(text)
    if column in _FLOAT_COLUMNS:
        return float(text)
    return text


def read_report(filename):
    try:
        with open(filename, newline='') as input_file:
            lines = input_file.read().splitlines()
    except OSError as e:
        raise IoError('Cannot read {0}: {1}'.format(filename, e))

    header_lines = [line[len(HEADER_PREFIX):] for line in lines if line.startswith(HEADER_PREFIX)]
    body = [line for line in lines if not line.startswith(HEADER_PREFIX)]
    try:
        header = json.loads('\n'.join(header_lines))
    except ValueError as e:
        raise SchemaError('{0} has a malformed header: {1}'.format(filename, e))
    _check_version(header, REPORT_VERSION, filename)

    reader = csv.DictReader(io.StringIO('\n'.join(body)))
    if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
        raise SchemaError('{0} does not have the report columns'.format(filename))

    rows = []
    for record in reader:
        values = {column: _parse_value(column, record[column]) for column in REPORT_COLUMNS}
        values['error'] = values['error'] or ''
        rows.append(ReportRow(**values))
    return header, rows


# Diagnostics

def diagnostic_filename(report_filename):
    return os.path.splitext(report_filename)[0] + '.diagnostic.npz'


def save_diagnostics(filename, predictions):
    """
    Store per-sample predictions of SRS points as one .npz archive.

    `predictions` maps a point index to (serialized, reference, top_class, pm_upper).
    """
    arrays = {}
    for point_index, (serial, reference, top_class, pm_upper) in sorted(predictions.items()):
        arrays['srs_{0}'.format(point_index)] = np.asarray(serial, dtype=np.int64)
        arrays['ref_{0}'.format(point_index)] = np.asarray(reference, dtype=np.int64)
        arrays['meta_{0}'.format(point_index)] = np.array([top_class, pm_upper], dtype=np.float64)

    try:
        with atomic_output(filename) as temp_path:
            with open(temp_path, 'wb') as output_file:
                np.savez_compressed(output_file, **arrays)
    except OSError as e:
        raise IoError('Cannot write {0}: {1}'.format(filename, e))


def load_diagnostics(filename):
    try:
        with np.load(filename) as archive:
            points = sorted(int(key.split('_', 1)[1]) for key in archive.files if key.startswith('srs_'))
            return {
                point_index: (
                    archive['srs_{0}'.format(point_index)],
                    archive['ref_{0}'.format(point_index)],
                    int(archive['meta_{0}'.format(point_index)][0]),
                    float(archive['meta_{0}'.format(point_index)][1]),
                )
                for point_index in points
            }
    except OSError as e:
        raise IoError('Cannot read {0}: {1}'.format(filename, e))
    except (KeyError, ValueError) as e:
        raise SchemaError('{0} is not a valid diagnostic archive: {1}'.format(filename, e))


# Metrics

def save_metrics(metrics, filename):
    _dump_json(metrics, filename)


def save_histogram(bins, filename):
    with open_output(filename) as output_file:
        writer = csv.writer(output_file, lineterminator='\n')
        writer.writerow(('lower', 'upper', 'count'))
        for entry in bins:
            writer.writerow((repr(entry['lower']), repr(entry['upper']), entry['count']))
