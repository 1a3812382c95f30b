from .speaker_metrics import (
    cosine_similarity, cosine_distance, secs, secs_scores, secs_summary, variance_sum,
    nearest_neighbor, nn2nn, new_voice_distance_report, NewVoiceReport, NewVoiceRow,
)
from .pca_projection import PcaResult, pca_fit
from .report_writer import write_csv, write_scatter_svg, scatter_figure

__all__ = [
    'cosine_similarity', 'cosine_distance', 'secs', 'secs_scores', 'secs_summary', 'variance_sum',
    'nearest_neighbor', 'nn2nn', 'new_voice_distance_report', 'NewVoiceReport', 'NewVoiceRow',
    'PcaResult', 'pca_fit',
    'write_csv', 'write_scatter_svg', 'scatter_figure',
]
