from .flow_layers import ActNorm, InvertibleLinear, AffineCoupling
from .flow_model import FlowModel, FlowStep, flow_forward, flow_inverse, nll
from .flow_trainer import FlowTrainer, TrainingExample, TrainingReport, EpochRecord, train
from .checkpoint import save_checkpoint, load_checkpoint, encode_checkpoint, decode_checkpoint

__all__ = [
    'ActNorm', 'InvertibleLinear', 'AffineCoupling',
    'FlowModel', 'FlowStep', 'flow_forward', 'flow_inverse', 'nll',
    'FlowTrainer', 'TrainingExample', 'TrainingReport', 'EpochRecord', 'train',
    'save_checkpoint', 'load_checkpoint', 'encode_checkpoint', 'decode_checkpoint',
]
