"""
Parameter and FLOP counts of the hyper-parameter grid
=====================================================

Every configuration in the grid is counted analytically and compared with
the reference columns it was published with.
"""

from swingseq.complexity import ABLATION_GRID, BASELINE, SEQ_LENGTH_FLOPS, count_flops, count_params, grid_model_config

print(f"{'cfg':>8} {'d':>4} {'T':>3} {'N':>2} {'H':>4} {'bi':>3} {'params':>8} {'ref':>6} {'GFLOPs':>7} {'ref':>6}")
for row in (*ABLATION_GRID, dict(BASELINE, config="baseline")):
    cfg = grid_model_config(row)
    params = count_params(cfg) / 1e6
    flops = count_flops(cfg) / 1e9
    print(f"{row['config']:>8} {cfg.d:>4} {cfg.T:>3} {cfg.lstm_layers:>2} {cfg.lstm_hidden:>4} "
          f"{'y' if cfg.bidirectional else 'n':>3} {params:8.3f} {row['ref_params']:6.2f} "
          f"{flops:7.2f} {row['ref_flops']:6.2f}")

# Counting one multiply-accumulate as one FLOP lands a few percent below the
# reference; adding batch-norm, activations, residual adds and pooling closes
# most of the gap.
baseline = grid_model_config(BASELINE)
for T, ref in SEQ_LENGTH_FLOPS.items():
    macs = count_flops(baseline, T) / 1e9
    full = count_flops(baseline, T, include_elementwise=True) / 1e9
    print(f"T={T:>2}: conv+rnn {macs:5.2f}  with elementwise {full:5.2f}  reference {ref:5.2f}")
