#!/usr/bin/env python

import os
import sys
import threading

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from upright import tensor as T
from upright.errors import DomainError, FormatError, HeaderError, TruncatedPayload


## Helpers

rng = np.random.default_rng(5)


def gradcheck(f, *arrays, step=1e-4, rtol=1e-3, atol=1e-6):
	"""Compare backward() with central differences, in float64."""
	tensors = [T.Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
	f(*tensors).backward()
	for t in tensors:
		numeric = np.zeros_like(t.data)
		for i in np.ndindex(t.shape):
			old = t.data[i]
			with T.no_grad():
				t.data[i] = old + step
				up = f(*tensors).item()
				t.data[i] = old - step
				down = f(*tensors).item()
			t.data[i] = old
			numeric[i] = (up - down) / (2 * step)
		assert t.grad is not None
		assert np.allclose(t.grad, numeric, rtol=rtol, atol=atol), np.abs(t.grad - numeric).max()


def weighted(r, shape):
	"""A fixed random projection to a scalar, so no gradient is trivially uniform.
	Draw it once, outside the function handed to gradcheck."""
	w = r.standard_normal(shape)
	return lambda out: (out * w).sum()


def away_from(values, points, margin=0.05):
	for p in points:
		near = np.abs(values - p) < margin
		values = np.where(near, p + np.copysign(margin, values - p + 1e-12), values)
	return values


## Elementwise, reductions, products

SEEDS = range(10)

def test_doc_example_and_shared_use():
	x = T.Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
	(x * x + x).sum().backward()
	assert x.grad.tolist() == [3.0, -3.0, 7.0]

@pytest.mark.parametrize('seed', SEEDS)
def test_arithmetic_with_broadcasting(seed):
	r = np.random.default_rng(seed)
	a = r.standard_normal((3, 4))
	b = r.uniform(0.5, 2.0, (1, 4))
	loss = weighted(r, (3, 4))
	gradcheck(lambda a, b: loss(a * b - a / b + 2.0 * a - b ** 2), a, b)
	gradcheck(lambda a, b: loss(1.0 - a + b / 3.0), a, b)

@pytest.mark.parametrize('seed', SEEDS)
def test_reductions_and_shapes(seed):
	r = np.random.default_rng(seed)
	a = r.standard_normal((2, 3, 4))
	summed = weighted(r, (2, 4))
	averaged = weighted(r, (2, 3, 1))
	reshaped = weighted(r, (4, 6))
	gradcheck(lambda a: summed(a.sum(axis=1)), a)
	gradcheck(lambda a: averaged(a.mean(axis=2, keepdims=True)), a)
	gradcheck(lambda a: reshaped(a.transpose(2, 0, 1).reshape(4, 6)), a)
	gradcheck(lambda a: (a * a).mean(), a)

@pytest.mark.parametrize('seed', SEEDS)
def test_batched_matmul(seed):
	r = np.random.default_rng(seed)
	a = r.standard_normal((2, 3, 4))
	b = r.standard_normal((4, 5))
	loss = weighted(r, (2, 3, 5))
	gradcheck(lambda a, b: loss(a @ b), a, b)

def test_matmul_rejects_vectors():
	with pytest.raises(DomainError):
		T.matmul(T.Tensor(np.ones(3)), T.Tensor(np.ones((3, 3))))

@pytest.mark.parametrize('seed', SEEDS)
def test_unary_functions(seed):
	r = np.random.default_rng(seed)
	a = away_from(r.uniform(-2, 2, (3, 5)), [-1.0, -0.5, 0.0, 0.5, 1.0])
	loss = weighted(r, (3, 5))
	for fn in (T.tanh, T.sigmoid, T.relu, T.leaky_relu, T.smooth_l1, T.tabs,
	           lambda x: T.softmax(x, axis=0), lambda x: T.softmax(x, axis=-1),
	           lambda x: T.clip(x, -0.5, 0.5)):
		gradcheck(lambda x: loss(fn(x)), a)
	gradcheck(lambda x: loss(T.log(x)), np.abs(a) + 0.1)

def test_smooth_l1_values():
	d = T.Tensor(np.array([-3.0, -1.0, 0.5, 2.0]))
	assert T.smooth_l1(d).data.tolist() == [2.5, 0.5, 0.125, 1.5]

def test_backward_needs_scalar():
	x = T.Tensor(np.ones(3), requires_grad=True)
	with pytest.raises(DomainError):
		(x * 2.0).backward()
	(x * 2.0).backward(np.array([1.0, 0.0, 1.0]))
	assert x.grad.tolist() == [2.0, 0.0, 2.0]

def test_ndarray_on_the_left():
	x = T.Tensor(np.ones(2), requires_grad=True)
	y = np.array([2.0, 3.0]) * x
	assert isinstance(y, T.Tensor)
	y.sum().backward()
	assert x.grad.tolist() == [2.0, 3.0]


## Graph recording

def test_no_grad_records_nothing():
	x = T.Tensor(np.ones(3), requires_grad=True)
	with T.no_grad():
		y = (x * x).sum()
	assert not y.requires_grad and y._prev == ()
	assert T.grad_enabled()

def test_no_grad_is_per_thread():
	seen = []
	with T.no_grad():
		t = threading.Thread(target=lambda: seen.append(T.grad_enabled()))
		t.start()
		t.join()
		assert not T.grad_enabled()
	assert seen == [True]

def test_frozen_parameter_collects_nothing():
	p = T.Parameter(np.ones(3), 'p', frozen=True)
	x = T.Tensor(np.ones(3), requires_grad=True)
	(p * x).sum().backward()
	assert p.grad is None
	assert x.grad.tolist() == [1.0, 1.0, 1.0]


## Layers

def conv_loop(x, w, b, stride, padding):
	N, C, H, W = x.shape
	O, _, kh, kw = w.shape
	xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
	Ho = (H + 2 * padding - kh) // stride + 1
	Wo = (W + 2 * padding - kw) // stride + 1
	out = np.zeros((N, O, Ho, Wo))
	for n in range(N):
		for o in range(O):
			for i in range(Ho):
				for j in range(Wo):
					patch = xp[n, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
					out[n, o, i, j] = (patch * w[o]).sum() + b[o]
	return out

@pytest.mark.parametrize('stride,padding,kernel', [(1, 0, 3), (1, 1, 3), (2, 1, 4), (2, 0, 3), (1, 0, 1)])
def test_conv2d_matches_loop(stride, padding, kernel):
	x = rng.standard_normal((2, 3, 7, 9))
	w = rng.standard_normal((4, 3, kernel, kernel))
	b = rng.standard_normal(4)
	out = T.conv2d(T.Tensor(x), T.Tensor(w), T.Tensor(b), stride, padding)
	assert np.allclose(out.data, conv_loop(x, w, b, stride, padding))

@pytest.mark.parametrize('seed', SEEDS)
@pytest.mark.parametrize('stride,padding', [(1, 1), (2, 1)])
def test_conv2d_gradients(stride, padding, seed):
	r = np.random.default_rng(seed)
	x = r.standard_normal((2, 2, 5, 6))
	w = r.standard_normal((3, 2, 3, 3))
	b = r.standard_normal(3)
	shape = T.conv2d(T.Tensor(x), T.Tensor(w), T.Tensor(b), stride, padding).shape
	loss = weighted(r, shape)
	gradcheck(lambda x, w, b: loss(T.conv2d(x, w, b, stride, padding)), x, w, b)

def test_conv2d_rejects_bad_shapes():
	with pytest.raises(DomainError):
		T.conv2d(T.Tensor(np.ones((1, 2, 4, 4))), T.Tensor(np.ones((1, 3, 3, 3))))
	with pytest.raises(DomainError):
		T.conv2d(T.Tensor(np.ones((1, 1, 2, 2))), T.Tensor(np.ones((1, 1, 3, 3))))

@pytest.mark.parametrize('seed', SEEDS)
def test_maxpool(seed):
	r = np.random.default_rng(seed)
	x = r.permutation(2 * 3 * 5 * 6).reshape(2, 3, 5, 6).astype(np.float64)
	out = T.maxpool2(T.Tensor(x))
	assert out.shape == (2, 3, 2, 3)
	assert out.data[1, 2, 1, 0] == x[1, 2, 2:4, 0:2].max()
	loss = weighted(r, (2, 3, 2, 3))
	gradcheck(lambda x: loss(T.maxpool2(x)), x)

def test_maxpool_ties_go_to_first():
	x = T.Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
	T.maxpool2(x).sum().backward()
	assert x.grad[0, 0].tolist() == [[1.0, 0.0], [0.0, 0.0]]

@pytest.mark.parametrize('seed', SEEDS)
def test_global_avgpool(seed):
	r = np.random.default_rng(seed)
	x = r.standard_normal((2, 3, 4, 5))
	assert np.allclose(T.global_avgpool(T.Tensor(x)).data, x.mean(axis=(2, 3)))
	loss = weighted(r, (2, 3))
	gradcheck(lambda x: loss(T.global_avgpool(x)), x)

@pytest.mark.parametrize('scale', [1e-3, 0.02, 1.0, 30.0])
def test_layer_norm_statistics(scale):
	x = rng.standard_normal((8, 16)) * scale + 1.0
	out = T.layer_norm(T.Tensor(x)).data
	assert np.allclose(out.mean(axis=-1), 0.0, atol=1e-6)
	assert np.allclose(out.var(axis=-1), 1.0, atol=1e-4)

def test_layer_norm_on_embedding_sized_tokens():
	x = rng.normal(0.0, 0.02, (6, 32)).astype(np.float32)
	out = T.layer_norm(T.Tensor(x)).data
	assert np.allclose(out.mean(axis=-1), 0.0, atol=1e-6)
	assert np.allclose(out.var(axis=-1), 1.0, atol=1e-4)
	flat = T.layer_norm(T.Tensor(np.full((2, 4), 3.0))).data
	assert np.array_equal(flat, np.zeros((2, 4)))

@pytest.mark.parametrize('seed', SEEDS)
def test_layer_norm_gradients(seed):
	r = np.random.default_rng(seed)
	x = r.standard_normal((4, 6)) * 3.0 + 1.0
	g = r.uniform(0.5, 1.5, 6)
	s = r.standard_normal(6)
	loss = weighted(r, (4, 6))
	gradcheck(lambda x, g, s: loss(T.layer_norm(x, g, s)), x, g, s)
	gradcheck(lambda x: loss(T.layer_norm(x)), x)

@pytest.mark.parametrize('seed', SEEDS)
def test_embedding_accumulates_repeats(seed):
	r = np.random.default_rng(seed)
	table = r.standard_normal((5, 3))
	indices = np.array([[0, 4], [4, 2]])
	out = T.embedding(T.Tensor(table), indices)
	assert np.array_equal(out.data[1, 0], table[4])
	loss = weighted(r, (2, 2, 3))
	gradcheck(lambda t: loss(T.embedding(t, indices)), table)

@pytest.mark.parametrize('seed', SEEDS)
def test_linear_and_kron_linear(seed):
	r = np.random.default_rng(seed)
	x = r.standard_normal((2, 3, 8))
	lin = T.Linear(r, 8, 5).astype(np.float64)
	loss = weighted(r, (2, 3, 5))
	gradcheck(lambda x, w, b: loss(T.linear(x, w, b)), x, lin.weight.data, lin.bias.data)
	kron = T.KronLinear(r, 2, 4).astype(np.float64)
	kron.bias.data = r.standard_normal(kron.bias.shape)
	dense = np.kron(kron.rows.data, kron.cols.data)
	assert np.allclose(kron(T.Tensor(x)).data, x @ dense.T + kron.bias.data.reshape(-1))
	planes = weighted(r, (2, 3, 8))
	def through(x, rows, cols):
		kron.rows, kron.cols = rows, cols
		return planes(kron(x))
	gradcheck(through, x, kron.rows.data, kron.cols.data)

@pytest.mark.parametrize('seed', SEEDS)
def test_attention(seed):
	r = np.random.default_rng(seed)
	N, L, D, heads = 2, 3, 8, 2
	x = r.standard_normal((N, L, D))
	layers = [T.Linear(r, D, D).astype(np.float64) for _ in range(4)]
	out, weights = T.multihead_self_attention(T.Tensor(x), heads, layers, return_weights=True)
	assert out.shape == (N, L, D) and weights.shape == (N, heads, L, L)
	assert np.allclose(weights.data.sum(axis=-1), 1.0)
	loss = weighted(r, (N, L, D))
	gradcheck(lambda x: loss(T.multihead_self_attention(x, heads, layers)), x)

def test_attention_rejects_uneven_heads():
	x = rng.standard_normal((2, 3, 8))
	layers = [T.Linear(rng, 8, 8) for _ in range(4)]
	with pytest.raises(DomainError):
		T.multihead_self_attention(T.Tensor(x), 3, layers)

def test_attention_without_queries_averages_values():
	x = rng.standard_normal((1, 4, 6))
	zero = lambda t: t * 0.0
	same = lambda t: t
	out, weights = T.multihead_self_attention(T.Tensor(x), 2, (zero, same, same, same), return_weights=True)
	assert np.allclose(weights.data, 0.25)
	assert np.allclose(out.data, np.broadcast_to(x.mean(axis=1, keepdims=True), x.shape))

def test_bilinear_upsample_values():
	m = T.interpolation_matrix(4, 3)
	assert np.allclose(m.sum(axis=1), 1.0)
	ramp = np.add.outer(np.arange(4.0), 2 * np.arange(8.0))
	up = T.bilinear_upsample(T.Tensor(ramp), 2).data
	centres_y = (np.arange(8) + 0.5) / 2 - 0.5
	centres_x = (np.arange(16) + 0.5) / 2 - 0.5
	assert np.allclose(up, np.add.outer(centres_y, 2 * centres_x))
	assert T.interpolation_matrix(1, 4).tolist() == [[1.0]] * 4

@pytest.mark.parametrize('seed', SEEDS)
def test_bilinear_upsample_gradients(seed):
	r = np.random.default_rng(seed)
	loss = weighted(r, (2, 4, 6))
	gradcheck(lambda x: loss(T.bilinear_upsample(x, 2)), r.standard_normal((2, 2, 3)))


## Modules, optimizers, checkpoints

class Tiny(T.Module):
	def __init__(self):
		self.conv = T.Conv2d(rng, 1, 2, 3, padding=1)
		self.heads = [T.Linear(rng, 2, 1), T.Linear(rng, 2, 1)]
		self.scale = T.Parameter(np.ones(1, dtype=np.float32), 'scale')

	def __call__(self, x):
		h = T.global_avgpool(T.relu(self.conv(x)))
		return (self.heads[0](h) + self.heads[1](h)) * self.scale

def test_named_parameters():
	names = [name for name, _ in Tiny().named_parameters()]
	assert names == ['conv.weight', 'conv.bias', 'heads.0.weight', 'heads.0.bias',
	                 'heads.1.weight', 'heads.1.bias', 'scale']
	assert Tiny().count() == 2 * 9 + 2 + 2 * (2 + 1) + 1

@pytest.mark.parametrize('make', [lambda ps: T.SGD(ps, 0.1), lambda ps: T.Adam(ps, 0.01)])
def test_optimizers_skip_frozen(make):
	model = Tiny()
	model.conv.freeze()
	before = {name: p.data.copy() for name, p in model.named_parameters()}
	optimizer = make(model.parameters())
	x = T.Tensor(rng.standard_normal((2, 1, 4, 4)).astype(np.float32))
	for _ in range(3):
		optimizer.zero_grad()
		(model(x) ** 2).mean().backward()
		optimizer.step()
	for name, p in model.named_parameters():
		if name.startswith('conv.'):
			assert np.array_equal(p.data, before[name])
		else:
			assert not np.array_equal(p.data, before[name])

def test_adam_first_step_moves_by_lr():
	p = T.Parameter(np.array([1.0, -1.0, 2.0]), 'p')
	p.grad = np.array([0.5, -3.0, 1e-3])
	T.adam_step(T.Adam([p], lr=0.1))
	assert np.allclose(p.data, [0.9, -0.9, 1.9], atol=1e-4)

def test_sgd_step():
	p = T.Parameter(np.array([1.0, 2.0]), 'p')
	p.grad = np.array([1.0, -2.0])
	T.sgd_step([p], 0.5)
	assert p.data.tolist() == [0.5, 3.0]

def test_checkpoint_round_trip(tmp_path):
	model = Tiny()
	path = tmp_path / 'tiny.ckpt'
	T.save_checkpoint(path, model.state_dict(), 'seed=3\n')
	state, text = T.load_checkpoint(path)
	assert text == 'seed=3\n'
	other = Tiny()
	other.load_state_dict(state)
	for (name, a), (_, b) in zip(model.named_parameters(), other.named_parameters()):
		assert np.array_equal(a.data, b.data), name

def test_checkpoint_errors(tmp_path):
	path = tmp_path / 'tiny.ckpt'
	T.save_checkpoint(path, Tiny().state_dict())
	raw = path.read_bytes()
	bad = tmp_path / 'bad.ckpt'
	bad.write_bytes(b'XCKP' + raw[4:])
	with pytest.raises(HeaderError):
		T.load_checkpoint(bad)
	bad.write_bytes(raw[:-3])
	with pytest.raises(TruncatedPayload):
		T.load_checkpoint(bad)
	bad.write_bytes(raw + b'\0')
	with pytest.raises(FormatError):
		T.load_checkpoint(bad)
	state, _ = T.load_checkpoint(path)
	del state['scale']
	with pytest.raises(FormatError):
		Tiny().load_state_dict(state)
	state, _ = T.load_checkpoint(path)
	state['scale'] = np.ones(2, dtype=np.float32)
	with pytest.raises(FormatError):
		Tiny().load_state_dict(state)


if __name__ == '__main__':
	pytest.main([__file__])
