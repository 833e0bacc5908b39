#!/usr/bin/env python

"""
Certify deep equilibrium classifiers against l2 perturbations with randomized smoothing.

Usage:
  deqcert gen-data [options] <kind> --out=<path>
  deqcert train [options] <dataset> --out=<path>
  deqcert certify [options] <model> <dataset> --out=<path>
  deqcert report [options] <report>... --out=<path>
  deqcert (-h | --help)

Arguments:
  <kind>                     Point cloud to generate: blobs, two_moons or rings.
  <dataset>                  Dataset JSON file.
  <model>                    Model JSON file.
  <report>                   Certification report. Pass a standard and an SRS report
                             certified with the same seed to get RRD and gap histograms.

Options:
  -h --help                  Show this screen.
  -n --dry-run               Don't run anything, just show what would be done.
  -v --verbose               Log debug messages.
  --config=<file>            YAML configuration file with a `defaults` section.
  --out=<path>               Output file; an output directory for `report`.
  --seed=<seed>              Seed for data, initialisation and Monte Carlo noise.
  --solver=<method>          Fixed-point solver: naive, anderson or broyden.
  --tol=<tol>                Relative residual tolerance of the solver.
  --max-iters=<n>            Iteration budget of the solver.
  --anderson-memory=<m>      Number of past iterates Anderson mixes.
  --n-points=<n>             Number of points to generate.
  --noise=<std>              Standard deviation of the point cloud noise.
  --num-classes=<k>          Number of classes to generate.
  --dim=<d>                  Input dimension, between 2 and 16.
  --separation=<dist>        Distance between adjacent blob centers or rings.
  --test-fraction=<f>        Share of generated points held out for certification.
  --test-out=<path>          Held-out points file; defaults to <out>.test.json.
  --hidden-dim=<h>           Size of the equilibrium state.
  --gamma=<gamma>            Contraction bound on the recurrent weights.
  --epochs=<n>               Training epochs.
  --lr=<lr>                  SGD learning rate.
  --adjoint-iters=<n>        Iteration budget of the backward fixed point.
  --adjoint-tol=<tol>        Tolerance of the backward fixed point.
  --loss-out=<file>          Loss trace CSV; defaults to <out>.loss.csv.
  --mode=<mode>              Certification mode: standard or srs.
  --sigma=<sigma>            Gaussian noise level for training augmentation or smoothing.
  --n-samples=<n>            Monte Carlo samples per point.
  --batch-size=<b>           Samples solved together; training minibatch size for `train`.
  --alpha=<alpha>            Total failure probability of a certificate.
  --srs-steps=<s>            Solver steps per serialized batch.
  --warmup-steps=<s>         Solver steps for warm-up batches.
  --warmup-solver=<method>   Solver for warm-up batches; defaults to --solver.
  --restart-interval=<n>     Restart from zero every n batches; 0 disables restarts.
  --holdout-k=<k>            Samples re-predicted by the reference solver.
  --start-from-clean         Warm start every batch from the clean input's fixed point.
  --diagnostic               Re-predict every sample with the reference solver.
  --jobs=<n>                 Points certified concurrently.
  --skip=<k>                 Certify every k-th point.
  --max-points=<n>           Certify at most n points.
  --thresholds=<list>        Comma separated radii for the certified accuracy table.
"""

import logging
import os
import sys

from deqcert.config import setup
from deqcert.exceptions import ArgumentError, CertifierError
from deqcert.tasks import TASKS, FatalTaskError


log = logging.getLogger(__name__)


# pylint: disable=missing-docstring


SUCCESS = 0
USAGE_ERROR = 1
FAILURE = 2


def main(argv=None):
    try:
        config = setup(__doc__, argv=argv)
    except CertifierError:
        log.exception('Cannot read the configuration')
        return FAILURE

    task = TASKS[config['command']]
    try:
        task.check_values(config['values'])
    except ArgumentError as e:
        log.error('Invalid options for %s: %s', task.NAME, e)
        return USAGE_ERROR

    return run_task(task, **config['values'])


def run_task(task, out, dry_run=False, **kwargs):
    log.info('Running task %s', task.NAME)
    try:
        task.run(out, dry_run, **kwargs)
    except FatalTaskError:
        log.exception('Task %s failed fatally to write to %s', task.NAME, out)
        return FAILURE
    except Exception:  # pylint: disable=broad-except
        failed_filename = task.write_failed_file(out)
        log.exception('Task %s failed, writing failure file %s', task.NAME, failed_filename)
        return FAILURE

    if not dry_run:
        log.info('Saved task results to %s', os.path.abspath(out))
    return SUCCESS


if __name__ == '__main__':
    sys.exit(main())
