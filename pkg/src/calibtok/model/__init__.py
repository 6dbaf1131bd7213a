from .config import ModelConfig
from .weights import ModelWeights, init_model
from .tokens import TokenMode, TokenSet
from .vit import AttentionRecord, Backprop, forward, linearize, \
                 forward_backward_tokens, forward_backward_full, \
                 export_embeddings, parameter_overhead
