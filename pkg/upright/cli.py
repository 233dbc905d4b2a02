"""Command-line front end.

	upright lut gen --pitch 10 --roll -5 --size 64x128 --dir inv --out t.ulut
	upright lut grid --range -90:90 --step 1 --size 256x512 --dry-run
	upright data synth --n 100 --seed 1 --out data/
	upright train --stage orientation --data data/ --ckpt ckpt/
	upright eval --data data/ --ckpt ckpt/

Exit status: 0 success, 2 usage error, 3 bad data or file, 4 numeric
failure.  Reports go to stdout as text; --report FILE also writes them
as JSON lines, preceded by the effective configuration.
"""

import argparse
import logging
import os
import sys

from tqdm import tqdm

from . import __version__
from .config import LUT_VARIANTS, PRESETS, RunConfig
from .dataset import build_dataset, load_dataset, save_dataset
from .errors import DomainError, UprightError
from .evalbench import bench_throughput, evaluate, storage_report, to_json
from .geometry import EquirectGrid, TiltAngles
from .imageio import read_image, write_image
from .lut import (Direction, coarse_then_upsample, generate_lut, iter_grid, lattice,
                  load_lut, lut_error, save_lut)
from .models import UprightPipeline
from .remap import BILINEAR, NEAREST, EquirectImage, remap, rotate_image
from .stream import take
from .training import STAGES, train_stage

logger = logging.getLogger('upright')


def _range(text):
	try:
		lo, hi = (float(v) for v in text.split(':'))
	except ValueError:
		raise argparse.ArgumentTypeError('range must look like MIN:MAX, got %r' % text)
	return lo, hi


def _grid(text):
	try:
		return EquirectGrid.parse(text)
	except DomainError as e:
		raise argparse.ArgumentTypeError(str(e))


def _direction(text):
	try:
		return Direction.parse(text)
	except DomainError as e:
		raise argparse.ArgumentTypeError(str(e))


class Reporter(object):
	"""Prints report lines and, given a path, writes JSON records."""

	def __init__(self, path, cfg):
		self.file = None
		if path:
			self.file = open(path, 'w', encoding='utf-8')
			self.file.write(to_json({'config': cfg.dump()}) + '\n')

	def emit(self, lines, *records):
		for line in lines:
			print(line)
		if self.file is not None:
			for record in records:
				self.file.write(to_json(record) + '\n')

	def close(self):
		if self.file is not None:
			self.file.close()


#_____________________________________________________________________
# Subcommands


def cmd_lut_gen(args, cfg, report):
	lut = generate_lut(TiltAngles(args.pitch, args.roll), args.size, args.dir)
	save_lut(lut, args.out)
	report.emit(['wrote %r to %s' % (lut, args.out)])


def cmd_lut_grid(args, cfg, report):
	lo, hi = args.range
	summary = storage_report(lo, hi, args.step, args.size, args.bytes_per_value, args.checkpoint)
	if not args.dry_run:
		if not args.out:
			raise DomainError('lut grid needs --out DIR unless --dry-run is given')
		os.makedirs(args.out, exist_ok=True)
		values = lattice(lo, hi, args.step)
		for (i, j), lut in tqdm(iter_grid(lo, hi, args.step, args.size, args.dir, cfg.threads),
		                        total=summary.grid.entries, desc='lut grid', unit='lut', disable=None):
			save_lut(lut, os.path.join(args.out, 'p%+04d_r%+04d.ulut' % (values[i], values[j])))
	report.emit(summary.lines(), summary.record())


def cmd_lut_approx(args, cfg, report):
	angles = TiltAngles(args.pitch, args.roll)
	interp = NEAREST if args.nearest else BILINEAR
	approx = coarse_then_upsample(angles, args.coarse, args.factor, interp, args.dir)
	truth = generate_lut(angles, args.coarse.scaled(args.factor), args.dir)
	err = lut_error(approx, truth)
	report.emit(['%s x%d (%s) against analytic %s' % (args.coarse, args.factor, interp, truth.grid)]
	            + err.lines(),
	            {'report': 'lut_approx', 'coarse': str(args.coarse), 'factor': args.factor,
	             'interp': interp, 'mean_abs_error': err.mean_abs_error,
	             'max_abs_error': err.max_abs_error, 'psnr': list(err.psnr_per_channel)})


def cmd_remap(args, cfg, report):
	image = EquirectImage(read_image(args.input))
	out = remap(image, load_lut(args.lut), NEAREST if args.nearest else BILINEAR, cfg.threads)
	write_image(out.data, args.out)
	report.emit(['wrote %s' % args.out])


def cmd_adjust(args, cfg, report):
	image = EquirectImage(read_image(args.input))
	out = rotate_image(image, TiltAngles(args.pitch, args.roll), Direction.INVERSE_UPRIGHT,
	                   NEAREST if args.nearest else BILINEAR, cfg.threads)
	write_image(out.data, args.out)
	report.emit(['wrote %s' % args.out])


def cmd_data_synth(args, cfg, report):
	lo, hi = args.range
	grid = args.size or EquirectGrid.of_height(cfg.image_height)
	splits = build_dataset(args.n, lo, hi, args.step, cfg.seed, grid, channels=cfg.channels,
	                       threads=cfg.threads)
	save_dataset(splits, args.out, '.uimg' if args.uimg else '.ppm')
	report.emit(['%s: %d records' % (name, len(records)) for name, records in splits.named()],
	            *({'report': 'dataset', 'split': name, 'count': len(records)}
	              for name, records in splits.named()))


def cmd_train(args, cfg, report):
	splits = load_dataset(args.data)
	log_path = None
	if args.log:
		os.makedirs(args.log, exist_ok=True)
		log_path = os.path.join(args.log, '%s.jsonl' % args.stage)
	result = train_stage(args.stage, splits.train, cfg, args.ckpt, args.steps, log_path, cfg.threads)
	last = result.history[-1] if result.history else {}
	report.emit(['%s: %d steps, final loss %.6g, wrote %s'
	             % (args.stage, len(result.history), last.get('loss', float('nan')), result.checkpoint)],
	            {'report': 'train', 'stage': args.stage, 'steps': len(result.history),
	             'checkpoint': result.checkpoint, 'final': last})


def _pipeline(args, cfg):
	return UprightPipeline.load(cfg, args.ckpt, threads=cfg.threads)


def cmd_eval(args, cfg, report):
	splits = load_dataset(args.data)
	records = getattr(splits, args.split)
	if args.limit:
		records = records >> take(args.limit) >> list
	if args.oracle:
		truth = {id(r.nonupright): r.angles for r in records}
		summary = evaluate(records, predictor=lambda image: truth[id(image)], threads=cfg.threads)
	else:
		summary = evaluate(records, pipeline=_pipeline(args, cfg), threads=cfg.threads)
	report.emit(summary.lines(), *summary.records())


def cmd_bench(args, cfg, report):
	grid = args.size or EquirectGrid.of_height(cfg.image_height)
	model = None
	if args.pipeline == 'e2e':
		if not args.ckpt:
			raise DomainError('bench --pipeline e2e needs --ckpt DIR')
		model = _pipeline(args, cfg)
	result = bench_throughput(args.pipeline, grid, args.frames, cfg.threads, cfg.seed, model)
	report.emit(result.lines(), result.record())


def cmd_e2e(args, cfg, report):
	pipeline = _pipeline(args, cfg)
	image = EquirectImage(read_image(args.input))
	angles, upright = pipeline.end_to_end_adjust(image)
	write_image(upright.data, args.out)
	report.emit(['predicted pitch %.2f roll %.2f, wrote %s' % (angles.pitch, angles.roll, args.out)],
	            {'report': 'e2e', 'pitch': angles.pitch, 'roll': angles.roll, 'out': args.out})


#_____________________________________________________________________
# Parser


def build_parser():
	parser = argparse.ArgumentParser(prog='upright', description='Upright adjustment of 360-degree panoramas.')
	parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
	parser.add_argument('--config', help='key=value configuration file')
	parser.add_argument('--preset', choices=PRESETS, help='configuration preset (default desk)')
	parser.add_argument('--seed', type=int, help='override the configured seed')
	parser.add_argument('--threads', type=int, help='worker threads (outputs do not depend on it)')
	parser.add_argument('--variant', choices=LUT_VARIANTS, help='LUT generator variant')
	parser.add_argument('--report', help='also write the report as JSON lines to this file')
	parser.add_argument('-v', '--verbose', action='count', default=0)
	parser.add_argument('-q', '--quiet', action='store_true')
	commands = parser.add_subparsers(dest='command', metavar='COMMAND')
	commands.required = True

	lut = commands.add_parser('lut', help='look-up tables').add_subparsers(dest='lut_command', metavar='ACTION')
	lut.required = True

	p = lut.add_parser('gen', help='write one analytic LUT')
	p.add_argument('--pitch', type=float, required=True)
	p.add_argument('--roll', type=float, required=True)
	p.add_argument('--size', type=_grid, required=True, help='HxW')
	p.add_argument('--dir', type=_direction, default=Direction.INVERSE_UPRIGHT, help='fwd or inv')
	p.add_argument('--out', required=True)
	p.set_defaults(func=cmd_lut_gen)

	p = lut.add_parser('grid', help='precompute a grid of LUTs and report its storage')
	p.add_argument('--range', type=_range, default=(-90.0, 90.0), help='MIN:MAX degrees')
	p.add_argument('--step', type=float, default=1.0)
	p.add_argument('--size', type=_grid, required=True, help='HxW')
	p.add_argument('--dir', type=_direction, default=Direction.INVERSE_UPRIGHT, help='fwd or inv')
	p.add_argument('--out', help='directory for the ULUT files')
	p.add_argument('--dry-run', action='store_true', help='report storage without generating')
	p.add_argument('--bytes-per-value', type=int, default=4)
	p.add_argument('--checkpoint', action='append', default=[], help='checkpoint file to size up')
	p.set_defaults(func=cmd_lut_grid)

	p = lut.add_parser('approx', help='coarse LUT plus upsampling against the analytic LUT')
	p.add_argument('--pitch', type=float, required=True)
	p.add_argument('--roll', type=float, required=True)
	p.add_argument('--coarse', type=_grid, required=True, help='HxW')
	p.add_argument('--factor', type=int, default=16)
	p.add_argument('--dir', type=_direction, default=Direction.INVERSE_UPRIGHT, help='fwd or inv')
	p.add_argument('--nearest', action='store_true')
	p.set_defaults(func=cmd_lut_approx)

	p = commands.add_parser('remap', help='apply a LUT to an image')
	p.add_argument('--in', dest='input', required=True)
	p.add_argument('--lut', required=True)
	p.add_argument('--out', required=True)
	p.add_argument('--nearest', action='store_true')
	p.set_defaults(func=cmd_remap)

	p = commands.add_parser('adjust', help='undo a known tilt analytically')
	p.add_argument('--in', dest='input', required=True)
	p.add_argument('--pitch', type=float, required=True)
	p.add_argument('--roll', type=float, required=True)
	p.add_argument('--out', required=True)
	p.add_argument('--nearest', action='store_true')
	p.set_defaults(func=cmd_adjust)

	data = commands.add_parser('data', help='datasets').add_subparsers(dest='data_command', metavar='ACTION')
	data.required = True
	p = data.add_parser('synth', help='synthesize a tilted panorama dataset')
	p.add_argument('--n', type=int, required=True)
	p.add_argument('--out', required=True)
	p.add_argument('--range', type=_range, default=(-90.0, 90.0), help='MIN:MAX degrees')
	p.add_argument('--step', type=float, default=1.0)
	p.add_argument('--size', type=_grid, help='HxW (default from the configuration)')
	p.add_argument('--uimg', action='store_true', help='store lossless float images')
	p.set_defaults(func=cmd_data_synth)

	p = commands.add_parser('train', help='train one stage')
	p.add_argument('--stage', choices=STAGES, required=True)
	p.add_argument('--data', required=True)
	p.add_argument('--ckpt', required=True, help='checkpoint directory')
	p.add_argument('--steps', type=int)
	p.add_argument('--log', help='directory for the JSON-lines training log')
	p.set_defaults(func=cmd_train)

	p = commands.add_parser('eval', help='accuracy and image quality on a dataset split')
	p.add_argument('--data', required=True)
	p.add_argument('--ckpt', help='checkpoint directory')
	p.add_argument('--split', choices=('train', 'val', 'test'), default='test')
	p.add_argument('--limit', type=int, help='evaluate only the first N records')
	p.add_argument('--oracle', action='store_true', help='predict the true angles')
	p.set_defaults(func=cmd_eval)

	p = commands.add_parser('bench', help='per-frame latency')
	p.add_argument('--pipeline', choices=('analytic', 'e2e'), default='analytic')
	p.add_argument('--frames', type=int, default=20)
	p.add_argument('--size', type=_grid, help='HxW (default from the configuration)')
	p.add_argument('--ckpt', help='checkpoint directory for the e2e pipeline')
	p.set_defaults(func=cmd_bench)

	p = commands.add_parser('e2e', help='predict the tilt and reconstruct the upright image')
	p.add_argument('--in', dest='input', required=True)
	p.add_argument('--ckpt', required=True)
	p.add_argument('--out', required=True)
	p.set_defaults(func=cmd_e2e)
	return parser


def _join_ranges(argv):
	# '--range -90:90' would otherwise parse '-90:90' as an option
	out = []
	argv = list(argv)
	while argv:
		arg = argv.pop(0)
		if arg == '--range' and argv:
			arg = '--range=' + argv.pop(0)
		out.append(arg)
	return out


def configure(args):
	if args.config:
		cfg = RunConfig.load(args.config)
		if args.preset and args.preset != cfg.preset:
			raise DomainError('--preset %s conflicts with %s' % (args.preset, args.config))
	else:
		cfg = RunConfig.from_preset(args.preset or 'desk')
	changes = {key: getattr(args, key) for key in ('seed', 'threads')
	           if getattr(args, key) is not None}
	if args.variant:
		changes['lut_variant'] = args.variant
	return cfg.replace(**changes) if changes else cfg


def main(argv=None):
	parser = build_parser()
	args = parser.parse_args(_join_ranges(sys.argv[1:] if argv is None else argv))
	level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
	logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s', stream=sys.stderr)
	if args.command == 'eval' and not args.oracle and not args.ckpt:
		parser.error('eval needs --ckpt DIR or --oracle')
	report = None
	try:
		cfg = configure(args)
		report = Reporter(args.report, cfg)
		args.func(args, cfg, report)
	except UprightError as e:
		logger.error('%s', e)
		return e.exit_code
	finally:
		if report is not None:
			report.close()
	return 0


if __name__ == '__main__':
	sys.exit(main())
