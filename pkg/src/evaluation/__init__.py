"""
长度分布评估模块
"""
from .histogram_metrics import (
    HistogramConfig, LengthHistogram, HistogramMetrics, build_histogram, histogram_metrics,
    emd, kl_divergence, plot_data, average_track_lengths,
)

__all__ = [
    'HistogramConfig', 'LengthHistogram', 'HistogramMetrics', 'build_histogram', 'histogram_metrics',
    'emd', 'kl_divergence', 'plot_data', 'average_track_lengths',
]
