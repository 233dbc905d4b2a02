"""A small reverse-mode differentiation stack on numpy arrays.

A Tensor wraps an ndarray.  Every operation on tensors that require
gradients records a closure that, given the gradient of its output,
accumulates gradients into its inputs; `backward()` replays the closures
in reverse topological order.  Only the operations the three networks
need are here.

	>>> x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
	>>> y = (x * x).sum()
	>>> y.backward()
	>>> x.grad.tolist()
	[2.0, -4.0, 6.0]

Set UPRIGHT_DEBUG=1 in the environment to check every forward value
and every gradient for NaN and infinity.
"""

import contextlib
import logging
import math
import os
import threading

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

from .errors import DomainError, FormatError, HeaderError, NumericError, TruncatedPayload

logger = logging.getLogger(__name__)

DEBUG = bool(os.environ.get('UPRIGHT_DEBUG'))

_state = threading.local()


def grad_enabled():
	return getattr(_state, 'enabled', True)


@contextlib.contextmanager
def no_grad():
	"""Build no graph inside the block (this thread only)."""
	previous = grad_enabled()
	_state.enabled = False
	try:
		yield
	finally:
		_state.enabled = previous


def _check_finite(array, what):
	if not np.all(np.isfinite(array)):
		raise NumericError('non-finite values in %s' % what)


#_____________________________________________________________________
# Tensor


class Tensor(object):
	# make ndarray (op) Tensor defer to the Tensor operators
	__array_ufunc__ = None

	def __init__(self, data, requires_grad=False):
		data = np.asarray(data)
		if not np.issubdtype(data.dtype, np.floating):
			data = data.astype(np.float32)
		self.data = data
		self.requires_grad = bool(requires_grad)
		self.grad = None
		self._prev = ()
		self._backward = None
		self._op = ''

	@property
	def shape(self):
		return self.data.shape

	@property
	def ndim(self):
		return self.data.ndim

	@property
	def dtype(self):
		return self.data.dtype

	def item(self):
		return self.data.item()

	def detach(self):
		return Tensor(self.data)

	def zero_grad(self):
		self.grad = None

	def __repr__(self):
		return 'Tensor(shape=%s, op=%r%s)' % (self.shape, self._op,
		                                      ', requires_grad' if self.requires_grad else '')

	def backward(self, grad=None):
		"""Accumulate d(self)/d(leaf) into the .grad of every leaf that
		requires gradients."""
		if grad is None:
			if self.data.size != 1:
				raise DomainError('backward() without a gradient needs a scalar')
			grad = np.ones_like(self.data)
		order = []
		visited = set()
		stack = [(self, False)]
		while stack:
			node, expanded = stack.pop()
			if expanded:
				order.append(node)
				continue
			if id(node) in visited:
				continue
			visited.add(id(node))
			stack.append((node, True))
			for parent in node._prev:
				if id(parent) not in visited:
					stack.append((parent, False))
		_accumulate(self, np.asarray(grad, dtype=self.data.dtype))
		for node in reversed(order):
			if node._backward is not None and node.grad is not None:
				node._backward(node.grad)
				if DEBUG:
					for parent in node._prev:
						if parent.grad is not None:
							_check_finite(parent.grad, 'gradient of %s' % (parent._op or 'leaf'))

	# operators

	def __add__(self, other):
		return add(self, other)

	def __radd__(self, other):
		return add(other, self)

	def __sub__(self, other):
		return add(self, neg(_lift(other, self)))

	def __rsub__(self, other):
		return add(other, neg(self))

	def __mul__(self, other):
		return mul(self, other)

	def __rmul__(self, other):
		return mul(other, self)

	def __truediv__(self, other):
		return div(self, other)

	def __rtruediv__(self, other):
		return div(other, self)

	def __neg__(self):
		return neg(self)

	def __pow__(self, exponent):
		return power(self, exponent)

	def __matmul__(self, other):
		return matmul(self, other)

	@property
	def T(self):
		return transpose(self)

	def sum(self, axis=None, keepdims=False):
		return tsum(self, axis, keepdims)

	def mean(self, axis=None, keepdims=False):
		return mean(self, axis, keepdims)

	def reshape(self, *shape):
		if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
			shape = shape[0]
		return reshape(self, shape)

	def transpose(self, *axes):
		return transpose(self, axes or None)


class Parameter(Tensor):
	"""A named leaf updated by optimizers.  Frozen parameters take part in
	forward passes but collect no gradient and are never updated."""
	def __init__(self, data, name='', frozen=False):
		super().__init__(data, requires_grad=not frozen)
		self.name = name
		self.frozen = frozen

	def freeze(self):
		self.frozen = True
		self.requires_grad = False
		self.grad = None

	def __repr__(self):
		return 'Parameter(%r, shape=%s%s)' % (self.name, self.shape, ', frozen' if self.frozen else '')


def _lift(x, like=None):
	if isinstance(x, Tensor):
		return x
	dtype = like.data.dtype if like is not None else None
	return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(grad, shape):
	while grad.ndim > len(shape):
		grad = grad.sum(axis=0)
	for axis, n in enumerate(shape):
		if n == 1 and grad.shape[axis] != 1:
			grad = grad.sum(axis=axis, keepdims=True)
	return grad


def _accumulate(tensor, grad):
	if not tensor.requires_grad:
		return
	grad = _unbroadcast(grad, tensor.shape).astype(tensor.data.dtype, copy=False)
	if tensor.grad is None:
		tensor.grad = np.array(grad, copy=True)
	else:
		tensor.grad = tensor.grad + grad


def _make(data, parents, op, backward):
	out = Tensor(data)
	out._op = op
	if DEBUG:
		_check_finite(out.data, op)
	if grad_enabled() and any(p.requires_grad for p in parents):
		out.requires_grad = True
		out._prev = tuple(parents)
		out._backward = backward
	return out


#_____________________________________________________________________
# Elementwise and reduction operations


def add(a, b):
	a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
	def backward(g):
		_accumulate(a, g)
		_accumulate(b, g)
	return _make(a.data + b.data, (a, b), 'add', backward)


def neg(a):
	def backward(g):
		_accumulate(a, -g)
	return _make(-a.data, (a,), 'neg', backward)


def mul(a, b):
	a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
	def backward(g):
		_accumulate(a, g * b.data)
		_accumulate(b, g * a.data)
	return _make(a.data * b.data, (a, b), 'mul', backward)


def div(a, b):
	a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
	def backward(g):
		_accumulate(a, g / b.data)
		_accumulate(b, -g * a.data / (b.data * b.data))
	return _make(a.data / b.data, (a, b), 'div', backward)


def power(a, exponent):
	if not isinstance(exponent, (int, float)):
		raise DomainError('only constant exponents are supported')
	def backward(g):
		_accumulate(a, g * exponent * a.data ** (exponent - 1))
	return _make(a.data ** exponent, (a,), 'pow', backward)


def tabs(a):
	def backward(g):
		_accumulate(a, g * np.sign(a.data))
	return _make(np.abs(a.data), (a,), 'abs', backward)


def log(a):
	def backward(g):
		_accumulate(a, g / a.data)
	return _make(np.log(a.data), (a,), 'log', backward)


def clip(a, lo, hi):
	"""Clamp values; the gradient passes where the input is inside [lo, hi]."""
	def backward(g):
		_accumulate(a, g * ((a.data >= lo) & (a.data <= hi)))
	return _make(np.clip(a.data, lo, hi), (a,), 'clip', backward)


def tsum(a, axis=None, keepdims=False):
	def backward(g):
		if axis is not None and not keepdims:
			g = np.expand_dims(g, axis)
		_accumulate(a, np.broadcast_to(g, a.shape))
	return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), 'sum', backward)


def mean(a, axis=None, keepdims=False):
	n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
	return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape):
	def backward(g):
		_accumulate(a, g.reshape(a.shape))
	return _make(a.data.reshape(shape), (a,), 'reshape', backward)


def transpose(a, axes=None):
	if axes is None:
		axes = tuple(range(a.ndim))[::-1]
	inverse = np.argsort(axes)
	def backward(g):
		_accumulate(a, g.transpose(inverse))
	return _make(a.data.transpose(axes), (a,), 'transpose', backward)


def matmul(a, b):
	"""Batched matrix product with numpy broadcasting over leading axes."""
	a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
	if a.ndim < 2 or b.ndim < 2:
		raise DomainError('matmul operands need at least two dimensions')
	def backward(g):
		_accumulate(a, g @ np.swapaxes(b.data, -1, -2))
		_accumulate(b, np.swapaxes(a.data, -1, -2) @ g)
	return _make(a.data @ b.data, (a, b), 'matmul', backward)


#_____________________________________________________________________
# Activations


def relu(x):
	mask = x.data > 0
	def backward(g):
		_accumulate(x, g * mask)
	return _make(np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,), 'relu', backward)


def leaky_relu(x, slope=0.2):
	mask = x.data > 0
	def backward(g):
		_accumulate(x, np.where(mask, g, slope * g))
	return _make(np.where(mask, x.data, slope * x.data).astype(x.dtype, copy=False),
	             (x,), 'leaky_relu', backward)


def sigmoid(x):
	y = special.expit(x.data)
	def backward(g):
		_accumulate(x, g * y * (1 - y))
	return _make(y, (x,), 'sigmoid', backward)


def tanh(x):
	y = np.tanh(x.data)
	def backward(g):
		_accumulate(x, g * (1 - y * y))
	return _make(y, (x,), 'tanh', backward)


def softmax(x, axis=-1):
	y = special.softmax(x.data, axis=axis)
	def backward(g):
		_accumulate(x, y * (g - np.sum(g * y, axis=axis, keepdims=True)))
	return _make(y, (x,), 'softmax', backward)


def smooth_l1(d):
	"""0.5 d^2 where |d| <= 1, |d| - 0.5 elsewhere (elementwise)."""
	small = np.abs(d.data) <= 1
	def backward(g):
		_accumulate(d, g * np.where(small, d.data, np.sign(d.data)))
	return _make(np.where(small, 0.5 * d.data * d.data, np.abs(d.data) - 0.5).astype(d.dtype, copy=False),
	             (d,), 'smooth_l1', backward)


#_____________________________________________________________________
# Layers as functions


def conv2d(x, weight, bias=None, stride=1, padding=0):
	"""Zero-padded cross-correlation of N x C x H x W input with an
	O x C x kh x kw kernel."""
	N, C, H, W = x.shape
	O, C2, kh, kw = weight.shape
	if C != C2:
		raise DomainError('conv2d: input has %d channels, kernel expects %d' % (C, C2))
	Ho = (H + 2 * padding - kh) // stride + 1
	Wo = (W + 2 * padding - kw) // stride + 1
	if Ho < 1 or Wo < 1:
		raise DomainError('conv2d: kernel %dx%d larger than padded input %dx%d'
		                  % (kh, kw, H + 2 * padding, W + 2 * padding))
	xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
	windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :Ho, :Wo]
	cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(N * Ho * Wo, C * kh * kw)
	wmat = weight.data.reshape(O, -1)
	out = (cols @ wmat.T).reshape(N, Ho, Wo, O).transpose(0, 3, 1, 2)
	if bias is not None:
		out = out + bias.data[None, :, None, None]
	parents = (x, weight) if bias is None else (x, weight, bias)
	def backward(g):
		gmat = g.transpose(0, 2, 3, 1).reshape(-1, O)
		if weight.requires_grad:
			_accumulate(weight, (gmat.T @ cols).reshape(weight.shape))
		if bias is not None:
			_accumulate(bias, g.sum(axis=(0, 2, 3)))
		if x.requires_grad:
			dcols = (gmat @ wmat).reshape(N, Ho, Wo, C, kh, kw)
			dxp = np.zeros_like(xp)
			for i in range(kh):
				for j in range(kw):
					dxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += \
						dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
			_accumulate(x, dxp[:, :, padding:padding + H, padding:padding + W])
	return _make(np.ascontiguousarray(out), parents, 'conv2d', backward)


def maxpool2(x):
	"""2 x 2 max pooling with stride 2.  An odd last row or column is
	dropped.  The gradient goes to the first maximum in row-major order."""
	N, C, H, W = x.shape
	H2, W2 = H // 2, W // 2
	if H2 < 1 or W2 < 1:
		raise DomainError('maxpool2: input %dx%d too small' % (H, W))
	blocks = x.data[:, :, :2 * H2, :2 * W2].reshape(N, C, H2, 2, W2, 2) \
		.transpose(0, 1, 2, 4, 3, 5).reshape(N, C, H2, W2, 4)
	index = blocks.argmax(axis=-1)[..., None]
	out = np.take_along_axis(blocks, index, axis=-1)[..., 0]
	def backward(g):
		gb = np.zeros_like(blocks)
		np.put_along_axis(gb, index, g[..., None], axis=-1)
		gx = np.zeros_like(x.data)
		gx[:, :, :2 * H2, :2 * W2] = gb.reshape(N, C, H2, W2, 2, 2) \
			.transpose(0, 1, 2, 4, 3, 5).reshape(N, C, 2 * H2, 2 * W2)
		_accumulate(x, gx)
	return _make(out, (x,), 'maxpool2', backward)


def global_avgpool(x):
	"""N x C x H x W to N x C."""
	return mean(x, axis=(2, 3))


def linear(x, weight, bias=None):
	"""x @ weight.T + bias with weight stored out x in."""
	y = matmul(x, transpose(weight)) if x.ndim >= 2 else matmul(reshape(x, (1, -1)), transpose(weight))
	return y if bias is None else y + bias


def layer_norm(x, gain=None, shift=None, eps=1e-12):
	"""Normalize over the last axis, then scale and shift.

	`eps` only guards constant tokens: any token with variance above 1e-8
	comes out with variance 1 within 1e-4.
	"""
	mu = x.data.mean(axis=-1, keepdims=True)
	xc = x.data - mu
	inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
	xhat = xc * inv
	out = xhat
	if gain is not None:
		out = out * gain.data
	if shift is not None:
		out = out + shift.data
	parents = tuple(t for t in (x, gain, shift) if t is not None)
	def backward(g):
		if gain is not None:
			_accumulate(gain, g * xhat)
		if shift is not None:
			_accumulate(shift, g)
		if x.requires_grad:
			d = g * gain.data if gain is not None else g
			_accumulate(x, inv * (d - d.mean(axis=-1, keepdims=True)
			                      - xhat * (d * xhat).mean(axis=-1, keepdims=True)))
	return _make(out.astype(x.dtype, copy=False), parents, 'layer_norm', backward)


def embedding(table, indices):
	"""Rows of `table` selected by an integer array."""
	indices = np.asarray(indices, dtype=np.intp)
	def backward(g):
		if table.requires_grad:
			gt = np.zeros_like(table.data)
			np.add.at(gt, indices, g)
			_accumulate(table, gt)
	return _make(table.data[indices], (table,), 'embedding', backward)


def multihead_self_attention(tokens, heads, projections, return_weights=False):
	"""Scaled dot-product self-attention over N x T x D tokens.

	`projections` is the tuple (query, key, value, output) of callables
	mapping N x T x D tensors to N x T x D tensors, so dense and
	factored projections share this code.
	"""
	N, T, D = tokens.shape
	if D % heads:
		raise DomainError('token dimension %d not divisible by %d heads' % (D, heads))
	dh = D // heads
	query, key, value, output = projections
	def split(t):
		return transpose(reshape(t, (N, T, heads, dh)), (0, 2, 1, 3))
	q, k, v = split(query(tokens)), split(key(tokens)), split(value(tokens))
	scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
	weights = softmax(scores, axis=-1)
	mixed = reshape(transpose(matmul(weights, v), (0, 2, 1, 3)), (N, T, D))
	out = output(mixed)
	return (out, weights) if return_weights else out


def interpolation_matrix(n, factor, dtype=np.float64):
	"""(n * factor) x n linear interpolation at half-pixel centres; the
	outermost samples are extrapolated so linear ramps come out exact."""
	m = np.zeros((n * factor, n), dtype=dtype)
	if n == 1:
		m[:, 0] = 1
		return m
	s = (np.arange(n * factor) + 0.5) / factor - 0.5
	i0 = np.clip(np.floor(s).astype(np.intp), 0, n - 2)
	w = s - i0
	rows = np.arange(n * factor)
	m[rows, i0] = 1 - w
	m[rows, i0 + 1] = w
	return m


def bilinear_upsample(x, factor):
	"""Upsample the last two axes by an integer factor."""
	h, w = x.shape[-2:]
	ay = interpolation_matrix(h, factor, x.dtype)
	ax = interpolation_matrix(w, factor, x.dtype)
	def backward(g):
		_accumulate(x, ay.T @ g @ ax)
	return _make(ay @ x.data @ ax.T, (x,), 'bilinear_upsample', backward)


#_____________________________________________________________________
# Modules


def _fan_in_uniform(rng, shape, fan_in):
	bound = 1.0 / math.sqrt(fan_in)
	return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Module(object):
	"""Parameters are found by walking attributes: Parameters, Modules,
	and lists of either."""

	def named_parameters(self, prefix=''):
		for name, value in vars(self).items():
			if isinstance(value, Parameter):
				yield prefix + name, value
			elif isinstance(value, Module):
				yield from value.named_parameters(prefix + name + '.')
			elif isinstance(value, (list, tuple)):
				for i, v in enumerate(value):
					if isinstance(v, Parameter):
						yield '%s%s.%d' % (prefix, name, i), v
					elif isinstance(v, Module):
						yield from v.named_parameters('%s%s.%d.' % (prefix, name, i))

	def parameters(self):
		return [p for _, p in self.named_parameters()]

	def freeze(self):
		for p in self.parameters():
			p.freeze()
		return self

	def zero_grad(self):
		for p in self.parameters():
			p.zero_grad()

	def astype(self, dtype):
		for p in self.parameters():
			p.data = p.data.astype(dtype)
		return self

	def state_dict(self):
		return {name: p.data for name, p in self.named_parameters()}

	def load_state_dict(self, state, prefix=''):
		for name, p in self.named_parameters():
			key = prefix + name
			if key not in state:
				raise FormatError('checkpoint has no parameter %r' % key)
			if state[key].shape != p.shape:
				raise FormatError('parameter %r has shape %s, checkpoint %s'
				                  % (key, p.shape, state[key].shape))
			p.data = np.array(state[key], dtype=p.dtype)

	def count(self):
		return sum(p.data.size for p in self.parameters())


class Conv2d(Module):
	def __init__(self, rng, in_channels, out_channels, kernel, stride=1, padding=0):
		fan_in = in_channels * kernel * kernel
		self.weight = Parameter(_fan_in_uniform(rng, (out_channels, in_channels, kernel, kernel), fan_in), 'weight')
		self.bias = Parameter(_fan_in_uniform(rng, (out_channels,), fan_in), 'bias')
		self.stride = stride
		self.padding = padding

	def __call__(self, x):
		return conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
	def __init__(self, rng, in_features, out_features):
		self.weight = Parameter(_fan_in_uniform(rng, (out_features, in_features), in_features), 'weight')
		self.bias = Parameter(_fan_in_uniform(rng, (out_features,), in_features), 'bias')

	def __call__(self, x):
		return linear(x, self.weight, self.bias)


class KronLinear(Module):
	"""Linear map on tokens holding an h x w plane: X -> A X B^T + C.
	Stands in for a dense (hw x hw) matrix with h^2 + w^2 weights."""
	def __init__(self, rng, height, width):
		self.height, self.width = height, width
		self.rows = Parameter(_fan_in_uniform(rng, (height, height), height), 'rows')
		self.cols = Parameter(_fan_in_uniform(rng, (width, width), width), 'cols')
		self.bias = Parameter(np.zeros((height, width), dtype=np.float32), 'bias')

	def __call__(self, x):
		lead = x.shape[:-1]
		plane = reshape(x, lead + (self.height, self.width))
		y = matmul(matmul(self.rows, plane), transpose(self.cols)) + self.bias
		return reshape(y, lead + (self.height * self.width,))


class LayerNorm(Module):
	def __init__(self, dim):
		self.gain = Parameter(np.ones(dim, dtype=np.float32), 'gain')
		self.shift = Parameter(np.zeros(dim, dtype=np.float32), 'shift')

	def __call__(self, x):
		return layer_norm(x, self.gain, self.shift)


class Embedding(Module):
	def __init__(self, rng, vocabulary, dim, std=0.02):
		self.table = Parameter(rng.normal(0.0, std, size=(vocabulary, dim)).astype(np.float32), 'table')

	def __call__(self, indices):
		return embedding(self.table, indices)


#_____________________________________________________________________
# Optimizers


def _trainable(params):
	return [p for p in params if not p.frozen and p.grad is not None]


def sgd_step(params, lr):
	for p in _trainable(params):
		p.data -= np.asarray(lr * p.grad, dtype=p.dtype)


class SGD(object):
	def __init__(self, params, lr):
		self.params = list(params)
		self.lr = lr

	def step(self):
		sgd_step(self.params, self.lr)

	def zero_grad(self):
		for p in self.params:
			p.zero_grad()


class Adam(object):
	def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
		self.params = list(params)
		self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
		self.t = 0
		self.m = {id(p): np.zeros_like(p.data) for p in self.params}
		self.v = {id(p): np.zeros_like(p.data) for p in self.params}

	def step(self):
		self.t += 1
		c1 = 1.0 - self.beta1 ** self.t
		c2 = 1.0 - self.beta2 ** self.t
		for p in _trainable(self.params):
			m, v, g = self.m[id(p)], self.v[id(p)], p.grad
			m *= self.beta1
			m += (1.0 - self.beta1) * g
			v *= self.beta2
			v += (1.0 - self.beta2) * g * g
			p.data -= np.asarray(self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps), dtype=p.dtype)

	def zero_grad(self):
		for p in self.params:
			p.zero_grad()


def adam_step(optimizer):
	optimizer.step()


#_____________________________________________________________________
# Checkpoint files
#
# b'UCKP', version u8, config length u32 + UTF-8 config text,
# parameter count u32, then per parameter: name length u16 + UTF-8 name,
# ndim u8, dims u32 each, float32 values; all little-endian.

CKPT_MAGIC = b'UCKP'
CKPT_VERSION = 1


def save_checkpoint(path, state, config_text=''):
	parts = [CKPT_MAGIC, np.uint8(CKPT_VERSION).tobytes()]
	text = config_text.encode('utf-8')
	parts += [np.array(len(text), '<u4').tobytes(), text, np.array(len(state), '<u4').tobytes()]
	for name, data in state.items():
		encoded = name.encode('utf-8')
		data = np.asarray(data)
		parts += [np.array(len(encoded), '<u2').tobytes(), encoded,
		          np.uint8(data.ndim).tobytes(), np.array(data.shape, '<u4').tobytes(),
		          data.astype('<f4').tobytes()]
	with open(path, 'wb') as f:
		for part in parts:
			f.write(part)


class _Reader(object):
	def __init__(self, raw, name):
		self.raw, self.name, self.pos = raw, name, 0

	def take(self, n):
		if self.pos + n > len(self.raw):
			raise TruncatedPayload('%s: truncated at byte %d' % (self.name, self.pos))
		chunk = self.raw[self.pos:self.pos + n]
		self.pos += n
		return chunk

	def scalar(self, dtype):
		dtype = np.dtype(dtype)
		return int(np.frombuffer(self.take(dtype.itemsize), dtype)[0])


def load_checkpoint(path):
	"""(name -> float32 array, config text)."""
	with open(path, 'rb') as f:
		reader = _Reader(f.read(), str(path))
	if len(reader.raw) < 5 or reader.take(4) != CKPT_MAGIC:
		raise HeaderError('%s: not a checkpoint' % path)
	if reader.scalar('u1') != CKPT_VERSION:
		raise HeaderError('%s: unsupported checkpoint version' % path)
	config_text = reader.take(reader.scalar('<u4')).decode('utf-8')
	state = {}
	for _ in range(reader.scalar('<u4')):
		name = reader.take(reader.scalar('<u2')).decode('utf-8')
		ndim = reader.scalar('u1')
		shape = tuple(int(d) for d in np.frombuffer(reader.take(4 * ndim), '<u4'))
		count = int(np.prod(shape)) if shape else 1
		state[name] = np.frombuffer(reader.take(4 * count), '<f4').astype(np.float32).reshape(shape)
	if reader.pos != len(reader.raw):
		raise FormatError('%s: %d trailing bytes' % (path, len(reader.raw) - reader.pos))
	return state, config_text
