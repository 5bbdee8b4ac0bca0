"""
Prometheus metrics for monitoring numerical work
"""
from prometheus_client import Counter, Histogram, generate_latest
import time
from functools import wraps
from pathlib import Path

# Counters
field_evaluations_total = Counter(
    'field_evaluations_total',
    'Total scalar field evaluations',
    ['kind']
)

operator_iterations_total = Counter(
    'operator_iterations_total',
    'Total MW-operator iterate computations',
    ['algorithm']
)

words_enumerated_total = Counter(
    'words_enumerated_total',
    'Total multi-index words enumerated'
)

# Histograms
command_duration_seconds = Histogram(
    'command_duration_seconds',
    'Time taken to run a CLI command',
    ['command']
)


def track_time(metric: Histogram, **labels):
    """Decorator to track execution time"""
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            start = time.time()
            try:
                return func(*args, **kwargs)
            finally:
                observed = metric.labels(**labels) if labels else metric
                observed.observe(time.time() - start)

        return wrapper

    return decorator


def get_metrics():
    """Get current metrics in Prometheus format"""
    return generate_latest()


def write_metrics(path: str):
    """Dump current metrics to a text file"""
    Path(path).write_bytes(get_metrics())
