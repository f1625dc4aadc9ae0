from canm.blocks.channel import ChannelAttentionBlock, FullScaleChannelAttention, cab_forward
from canm.blocks.ctl import CompoundTransformerLayer, ConvBlock, FeedForwardBlock, ctl_forward
from canm.blocks.layers import ChannelLayerNorm, Conv2d, conv1x1, conv3x3
from canm.blocks.stages import DecoderStage, EncoderStage, stage_forward
from canm.blocks.window import WindowAttentionBlock, wab_forward, window_partition, window_reverse

__all__ = [
    "ChannelAttentionBlock",
    "ChannelLayerNorm",
    "CompoundTransformerLayer",
    "Conv2d",
    "ConvBlock",
    "DecoderStage",
    "EncoderStage",
    "FeedForwardBlock",
    "FullScaleChannelAttention",
    "WindowAttentionBlock",
    "cab_forward",
    "conv1x1",
    "conv3x3",
    "ctl_forward",
    "stage_forward",
    "wab_forward",
    "window_partition",
    "window_reverse",
]
