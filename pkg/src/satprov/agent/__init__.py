from .network import Adam, encode_graph, init_params, leo_logits, log_softmax, loss_and_grad, meo_logits, value_forward
from .ppo import (
    METRIC_FIELDS,
    InferenceResult,
    PolicyState,
    TrainConfig,
    TransitionRecord,
    act,
    compute_gae,
    infer,
    load_checkpoint,
    ppo_update,
    save_checkpoint,
    train,
)
