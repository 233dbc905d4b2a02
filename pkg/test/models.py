#!/usr/bin/env python

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from upright import tensor as T
from upright.config import RunConfig
from upright.errors import DomainError, FormatError
from upright.evalbench import ssim as reference_ssim
from upright.geometry import EquirectGrid, TiltAngles
from upright.lut import Direction
from upright.models import (ANGLE_VOCABULARY, Discriminator, LossWeights, LutFormer, LutFormerConfig,
                            OrientationNet, OrientationNetConfig, PerceptualExtractor, Reconstructor,
                            ReconstructorConfig, UprightPipeline, analytic_lut, angle_indices,
                            angle_loss, build_models, decode_angles, discriminator_loss, lut_loss,
                            normalize_angles, reconstruction_loss, ssim)
from upright.remap import EquirectImage, rotate_image


## The test data

desk = RunConfig.from_preset('desk')
paper = RunConfig.from_preset('paper')
rng = np.random.default_rng(21)
images = rng.uniform(size=(2, 3, 64, 128)).astype(np.float32)
small = ReconstructorConfig(feature_channels=8, out_channels=3, channels=16, blocks=5, disc_channels=16)


def lutformer(variant='x16', cfg=desk):
	return LutFormer(LutFormerConfig.from_run(cfg.replace(lut_variant=variant)), np.random.default_rng(0))


## Angles

def test_angle_normalization():
	assert normalize_angles(TiltAngles(-90, 90)).tolist() == [0.0, 1.0]
	assert normalize_angles([[0, 45]]).tolist() == [[0.5, 0.75]]
	assert decode_angles(0.0, 1.0) == TiltAngles(-90, 90)
	for bad in (-0.01, 1.01, float('nan')):
		with pytest.raises(DomainError):
			decode_angles(bad, 0.5)

def test_angle_indices():
	assert angle_indices([-90, 0, 90, 89.6, -89.6]).tolist() == [0, 90, 180, 180, 0]
	assert ANGLE_VOCABULARY == 181
	for bad in ([90.6], [-91], [np.nan]):
		with pytest.raises(DomainError):
			angle_indices(bad)

def test_loss_weights():
	assert LossWeights(beta=0).beta == 0
	for bad in (dict(alpha=0), dict(mu_lut=-1), dict(lambda_angle=0), dict(beta=-0.1)):
		with pytest.raises(DomainError):
			LossWeights(**bad)


## Orientation network

def test_orientation_shapes():
	net = OrientationNet(OrientationNetConfig.from_run(desk), np.random.default_rng(0))
	out, features = net(T.Tensor(images))
	assert out.shape == (2, 2)
	assert features.shape == (2, desk.stem_channels, 64, 128)
	assert np.all((out.data > 0) & (out.data < 1))
	assert net.trunk(features).shape == (2,) + net.config.trunk_shape == (2, 256, 2, 4)
	with pytest.raises(DomainError):
		net(T.Tensor(images[:, :, :32, :64]))

def test_paper_trunk_is_8_by_16():
	assert OrientationNetConfig.from_run(paper).trunk_shape == (256, 8, 16)
	with pytest.raises(DomainError):
		OrientationNetConfig(3, 16, 32, 8, blocks=5)

def test_angle_loss_value():
	pred = T.Tensor(np.array([[0.6, 0.5]]), requires_grad=True)
	loss = angle_loss(pred, [[0.5, 0.5]], 1000.0)
	assert loss.item() == pytest.approx(5.0)
	loss.backward()
	assert pred.grad[0].tolist() == pytest.approx([100.0, 0.0])
	big = angle_loss(T.Tensor(np.array([[1.0, 0.0], [0.5, 0.5]])), [[0.0, 0.0], [0.5, 0.5]], 2.0)
	assert big.item() == pytest.approx(0.5)

def test_orientation_learns_a_gradient():
	net = OrientationNet(OrientationNetConfig.from_run(desk), np.random.default_rng(0))
	out, _ = net(T.Tensor(images))
	angle_loss(out, normalize_angles([[10, 20], [-30, 40]]), 1000.0).backward()
	assert all(p.grad is not None for p in net.parameters())


## LUT generator

def test_lutformer_shapes_and_range():
	for variant in ('x16', 'x2', 'x16_6', 'no_fc'):
		model = lutformer(variant)
		out = model([[10, -20], [0, 0], [90, -90]])
		assert out.shape == (3, 2, 64, 128)
		assert np.abs(out.data).max() < 1.0
	assert len(lutformer('x2').stages) == 4
	assert len(lutformer('x16_6').stages[0].blocks) == 6
	assert lutformer('no_fc').fusion is None

@pytest.mark.slow
def test_paper_lutformer_is_256_by_512():
	assert lutformer('x16', paper)([[5, 5]]).shape == (1, 2, 256, 512)

def test_generate_returns_inverse_lut():
	lut = lutformer().generate(TiltAngles(12, -7))
	assert lut.direction is Direction.INVERSE_UPRIGHT
	assert lut.grid == EquirectGrid(64, 128)
	assert (lut.pitch, lut.roll) == (12, -7)

def test_pitch_and_roll_are_not_interchangeable():
	model = lutformer()
	a = model([[10, 30]]).data
	b = model([[30, 10]]).data
	assert not np.allclose(a, b)

def silence_attention(model):
	for block in model.pre:
		block.output.weight.data[...] = 0
		block.output.bias.data[...] = 0

def test_without_fusion_tokens_stay_apart():
	no_fc = lutformer('no_fc')
	silence_attention(no_fc)
	with T.no_grad():
		a = no_fc.fuse(no_fc.encode(np.array([[10.0, -50.0]]))).data
		b = no_fc.fuse(no_fc.encode(np.array([[10.0, 70.0]]))).data
	assert np.array_equal(a[0, 0], b[0, 0])
	assert not np.array_equal(a[0, 1], b[0, 1])
	fused = lutformer('x16')
	silence_attention(fused)
	with T.no_grad():
		a = fused.fuse(fused.encode(np.array([[10.0, -50.0]]))).data
		b = fused.fuse(fused.encode(np.array([[10.0, 70.0]]))).data
	assert not np.allclose(a[0, 0], b[0, 0])

def test_lut_loss():
	generated = T.Tensor(np.zeros((1, 2, 4, 8)), requires_grad=True)
	loss = lut_loss(generated, np.full((1, 2, 4, 8), 0.01), 100.0)
	assert loss.item() == pytest.approx(1.0)
	loss.backward()
	assert np.allclose(generated.grad, -100.0 / 64)
	with pytest.raises(DomainError):
		lut_loss(generated, np.zeros((1, 2, 8, 4)), 1.0)

def test_lut_loss_reaches_the_embedding():
	model = lutformer()
	truth = analytic_lut(TiltAngles(10, 20), EquirectGrid(64, 128)).data[None]
	lut_loss(model([[10, 20]]), truth, 100.0).backward()
	rows = np.flatnonzero(np.abs(model.embed.table.grad).sum(axis=1))
	assert rows.tolist() == [100, 110]


## Reconstruction

def test_reconstructor_shape_and_range():
	model = Reconstructor(small, np.random.default_rng(0))
	out = model(T.Tensor(rng.standard_normal((1, 8, 32, 64))))
	assert out.shape == (1, 3, 32, 64)
	assert np.all((out.data > 0) & (out.data < 1))
	with pytest.raises(DomainError):
		model(T.Tensor(np.zeros((1, 3, 32, 64))))

def test_zeroed_residual_blocks_pass_through():
	model = Reconstructor(small, np.random.default_rng(0))
	for block in model.blocks:
		block.second.weight.data[...] = 0
		block.second.bias.data[...] = 0
	x = T.Tensor(rng.standard_normal((1, 8, 16, 32)))
	expected = T.sigmoid(model.head(T.relu(model.stem(x)))).data
	assert np.allclose(model(x).data, expected)

def test_discriminator_is_a_patch_classifier():
	disc = Discriminator(small, np.random.default_rng(0))
	assert small.patch_receptive_field == 18
	x = rng.uniform(size=(1, 3, 32, 64))
	out = disc(T.Tensor(x)).data
	assert out.shape == (1, 1, 8, 16)
	assert np.all((out > 0) & (out < 1))
	constant = disc(T.Tensor(np.full((1, 3, 32, 64), 0.3))).data[0, 0, 2:6, 2:14]
	assert np.allclose(constant, constant[0, 0])
	shifted = disc(T.Tensor(np.roll(x, 4, axis=-1))).data
	assert np.allclose(shifted[..., 3:13], out[..., 2:12])

def test_ssim():
	a = rng.uniform(size=(1, 3, 32, 64))
	b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
	assert ssim(T.Tensor(a), T.Tensor(a)).item() == pytest.approx(1.0)
	assert ssim(T.Tensor(a), T.Tensor(b)).item() == pytest.approx(reference_ssim(a[0], b[0]), abs=1e-6)
	with pytest.raises(DomainError):
		ssim(T.Tensor(a[..., :8, :16]), T.Tensor(a[..., :8, :16]))

def test_reconstruction_loss_components():
	extractor = PerceptualExtractor(3, 1234)
	assert all(p.frozen for p in extractor.parameters())
	target = rng.uniform(size=(1, 3, 32, 64))
	generated = T.Tensor(np.clip(target + rng.normal(0, 0.05, target.shape), 0, 1))
	weights = LossWeights(alpha=0.01, beta=0)
	total, parts = reconstruction_loss(generated, target, None, weights, extractor)
	assert parts['adversarial'] == 0.0
	assert parts['ssim'] > 0 and parts['pixel'] > 0 and parts['perceptual'] > 0
	assert total.item() == pytest.approx(0.01 * parts['perceptual'] + parts['ssim'] + parts['pixel'])
	doubled, _ = reconstruction_loss(generated, target, None, LossWeights(alpha=0.02, beta=0), extractor)
	assert doubled.item() - total.item() == pytest.approx(0.01 * parts['perceptual'])
	same, parts = reconstruction_loss(T.Tensor(target), target, None, weights, extractor)
	assert same.item() == pytest.approx(0.0, abs=1e-9)

def test_adversarial_terms():
	extractor = PerceptualExtractor(3, 1234)
	disc = Discriminator(small, np.random.default_rng(1))
	target = rng.uniform(size=(1, 3, 32, 64))
	generated = T.Tensor(rng.uniform(size=(1, 3, 32, 64)), requires_grad=True)
	total, parts = reconstruction_loss(generated, target, disc, LossWeights(), extractor)
	assert parts['adversarial'] > 0
	total.backward()
	assert generated.grad is not None
	assert all(p.grad is None for p in extractor.parameters())
	disc.zero_grad()
	generated.zero_grad()
	discriminator_loss(disc, T.Tensor(target), generated).backward()
	assert generated.grad is None
	assert all(p.grad is not None for p in disc.parameters())


## End to end

def test_build_models_is_seeded():
	first = build_models(desk)
	second = build_models(desk)
	for a, b in zip(first, second):
		for (name, p), (_, q) in zip(a.named_parameters(), b.named_parameters()):
			assert np.array_equal(p.data, q.data), name

def test_oracle_stages_reproduce_analytic_adjustment():
	orientation = build_models(desk)[0]
	pipeline = UprightPipeline(orientation, features=lambda image, shallow: image.data,
	                           lut_source=analytic_lut, reconstruct=lambda features: features)
	image = EquirectImage(images[0])
	angles, upright = pipeline.end_to_end_adjust(image)
	assert angles == pipeline.predict(image)[0]
	expected = rotate_image(image, angles, Direction.INVERSE_UPRIGHT)
	assert np.array_equal(upright.data, expected.data)

def test_learned_pipeline_runs():
	orientation, lut_model, reconstructor, _ = build_models(desk)
	pipeline = UprightPipeline(orientation, lut_model, reconstructor)
	angles, upright = pipeline.end_to_end_adjust(EquirectImage(images[1]))
	assert isinstance(angles, TiltAngles)
	assert upright.shape == (3, 64, 128)

def test_missing_checkpoint(tmp_path):
	with pytest.raises(FormatError):
		UprightPipeline.load(desk, str(tmp_path))


if __name__ == '__main__':
	pytest.main([__file__])
