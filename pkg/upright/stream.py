"""Lazily-evaluated, parallelizable pipelines.

Every batch loop in this package is written as a pipeline: a producer,
a number of filters, and an accumulator, joined with the '>>' operator.

	>>> range(6) >> map(lambda x: x * x) >> chop(4) >> list
	[[0, 1, 4, 9], [16, 25]]

Values are computed only when an accumulator forces evaluation, and a
ThreadPool can be dropped anywhere into a pipeline to spread the work
over several threads.  Unlike a plain worker pool, the ThreadPool here
yields its results in input order, so a pipeline produces the same
output whatever the pool size.  Numpy releases the interpreter lock
inside its kernels, which is where nearly all of our time is spent.
"""

import builtins
import collections.abc
import heapq
import itertools
import logging
import os
import queue
import threading

from .errors import BrokenPipe

logger = logging.getLogger(__name__)

_nCPU = os.cpu_count() or 1


#_____________________________________________________________________
# Base class


class Stream(collections.abc.Iterable):
	"""A stream is both a lazy list and an iterator-processing function.

	The lazy list is represented by the attribute 'iterator'.  The
	iterator-processing function is represented by __call__(iterator),
	which returns a new iterator representing the output of the Stream.

	The expression `a >> b` means
	`b.__pipe__(a) if hasattr(b, '__pipe__') else b(a)`.

	>>> [1, 2, 3] >> Stream([4, 5, 6]) >> list
	[1, 2, 3, 4, 5, 6]
	"""

	# ndarray.__rshift__ would otherwise broadcast '>>' over the elements
	__array_ufunc__ = None

	def __init__(self, iterable=None):
		self.iterator = iter(iterable if iterable is not None else [])

	def __iter__(self):
		return self.iterator

	def __call__(self, iterator):
		"""Append to the end of iterator."""
		return itertools.chain(iterator, self.iterator)

	def __pipe__(self, inpipe):
		self.iterator = self.__call__(iter(inpipe))
		return self

	@staticmethod
	def pipe(inpipe, outpipe):
		"""Connect inpipe and outpipe.  If outpipe is not a Stream instance,
		it should be a function callable on an iterable.
		"""
		if hasattr(outpipe, '__pipe__'):
			return outpipe.__pipe__(inpipe)
		elif callable(outpipe):
			return outpipe(inpipe)
		else:
			raise BrokenPipe('No connection mechanism defined for %r' % (outpipe,))

	def __rshift__(self, outpipe):
		return Stream.pipe(self, outpipe)

	def __rrshift__(self, inpipe):
		return Stream.pipe(inpipe, self)

	def __repr__(self):
		return 'Stream(%r)' % (self.iterator,)


#_______________________________________________________________________
# Process streams by element indices


class take(Stream):
	"""Take the first n items of the input stream, return a Stream.

	>>> range(10) >> take(3)
	Stream([0, 1, 2])
	"""
	def __init__(self, n):
		super().__init__()
		self.n = n
		self.items = []

	def __call__(self, iterator):
		self.items = list(itertools.islice(iterator, self.n))
		return iter(self.items)

	def __repr__(self):
		return 'Stream(%r)' % (self.items,)


#_______________________________________________________________________
# Process streams with functions


class apply(Stream):
	"""Invoke a function using each element of the input stream unpacked as
	its argument list, a la itertools.starmap.

	>>> [(1, 4), (2, 5)] >> apply(lambda x, y: x * y) >> list
	[4, 10]
	"""
	def __init__(self, function):
		super().__init__()
		self.function = function

	def __call__(self, iterator):
		return itertools.starmap(self.function, iterator)


class map(Stream):
	"""Invoke a function using each element of the input stream as its only
	argument.

	>>> range(5) >> map(lambda x: x + 1) >> list
	[1, 2, 3, 4, 5]
	"""
	def __init__(self, function):
		super().__init__()
		self.function = function

	def __call__(self, iterator):
		return builtins.map(self.function, iterator)


class chop(Stream):
	"""Chop the input stream into segments of length n.  The last segment
	may be shorter.

	>>> range(7) >> chop(3) >> list
	[[0, 1, 2], [3, 4, 5], [6]]
	"""
	def __init__(self, n):
		super().__init__()
		if n < 1:
			raise ValueError('segment length must be positive')
		self.n = n

	def __call__(self, iterator):
		def chopper():
			while True:
				segment = list(itertools.islice(iterator, self.n))
				if not segment:
					return
				yield segment
		return chopper()


#_____________________________________________________________________
# _iterqueue


def _iterqueue(q):
	# Turn a queue.Queue into a thread-safe iterator which will exhaust
	# when StopIteration is put into it.
	while True:
		x = q.get()
		if x is StopIteration:
			# Re-broadcast, in case there is another listener blocking on
			# q.get().  That listener will receive StopIteration and
			# re-broadcast to the next one in line.
			q.put(StopIteration)
			return
		yield x


class _Failure(object):
	def __init__(self, exception):
		self.exception = exception


#_____________________________________________________________________
# Ordered thread pool


class ThreadPool(Stream):
	"""Work on the input stream using a pool of threads, yielding results
	in input order.

	>>> range(10) >> ThreadPool(map(lambda x: x * x), poolsize=3) >> list
	[0, 1, 4, 9, 16, 25, 36, 49, 64, 81]

	`function` is an iterator-processing function that produces exactly
	one output per input, e.g. map(f).  Input items are tagged with their
	position, every worker runs its own copy of the function over the
	shared input queue, and the consumer puts results back in order with
	a heap.  The first exception raised by a worker is re-raised in the
	consuming thread when its position is reached.
	"""
	def __init__(self, function, poolsize=_nCPU):
		super().__init__()
		self.function = function
		self.poolsize = max(1, int(poolsize))
		self.inqueue = queue.Queue()
		self.outqueue = queue.Queue()
		self.closed = False
		self.feed_error = None
		def work():
			pending = collections.deque()
			def untag():
				for idx, x in _iterqueue(self.inqueue):
					pending.append(idx)
					yield x
			try:
				for y in self.function(untag()):
					self.outqueue.put((pending.popleft(), y))
			except Exception as e:
				logger.debug('worker failed: %r', e)
				self.outqueue.put((pending.popleft() if pending else -1, _Failure(e)))
		self.worker_threads = []
		for _ in range(self.poolsize):
			t = threading.Thread(target=work, daemon=True)
			self.worker_threads.append(t)
			t.start()
		def cleanup():
			# Wait for all workers to finish, then signal the end of outqueue.
			for t in self.worker_threads:
				t.join()
			self.outqueue.put(StopIteration)
			self.closed = True
		self.cleaner_thread = threading.Thread(target=cleanup, daemon=True)
		self.cleaner_thread.start()

	def __call__(self, inpipe):
		if self.closed:
			raise BrokenPipe('All workers are dead, refusing to submit jobs. '
			                 'Use another Pool.')
		def feed():
			try:
				for tagged in enumerate(inpipe):
					self.inqueue.put(tagged)
			except Exception as e:
				self.feed_error = e
			finally:
				self.inqueue.put(StopIteration)
		self.feeder_thread = threading.Thread(target=feed, daemon=True)
		self.feeder_thread.start()
		return self._reorder()

	def _reorder(self):
		heap = []
		expected = 0
		for idx, value in _iterqueue(self.outqueue):
			if idx < 0:
				raise value.exception
			heapq.heappush(heap, (idx, id(value), value))
			while heap and heap[0][0] == expected:
				_, _, value = heapq.heappop(heap)
				if isinstance(value, _Failure):
					raise value.exception
				yield value
				expected += 1
		for _, _, value in sorted(heap, key=lambda entry: entry[0]):
			if isinstance(value, _Failure):
				raise value.exception
		if self.feed_error is not None:
			raise self.feed_error

	def join(self):
		self.cleaner_thread.join()

	def __repr__(self):
		return '<ThreadPool(poolsize=%s) at %s>' % (self.poolsize, hex(id(self)))


def fanout(function, threads=1):
	"""Element-wise stage that runs on `threads` threads when asked to.

	>>> range(4) >> fanout(abs, threads=2) >> list
	[0, 1, 2, 3]
	"""
	if threads is None or threads <= 1:
		return map(function)
	return ThreadPool(map(function), poolsize=threads)
