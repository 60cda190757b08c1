"""Common logging strings."""

TX_PHASE_SENDING = "[tx_process_event()] Entering sending phase."
TX_PHASE_PREDICTING = "[tx_process_event()] Entering predicting phase."
TX_CALIBRATED = "[tx_process_event()] Send time calibrated."
TX_CALIBRATED_AT_PHASE_END = "[tx_process_event()] Send time calibrated from a partial phase."
TX_CALIBRATION_SKIPPED = "[tx_process_event()] Too few flow samples. Keeping previous send time."
TX_RUN_DONE = "[Transmitter.run()] Finished stream."

RX_WINDOW_PREDICTED = "[reconstruct()] Predicted window."
RX_CYCLE_FLUSHED = "[reconstruct()] Flushed cycle."
RX_TRAILING_SENDING_PHASE = "[reconstruct()] Stream ended inside a sending phase. No predictions for it."
RX_DONE = "[reconstruct()] Finished stream."

RX_BATCH_START = "[rx_predict_batch()] Predicting..."
RX_BATCH_DONE = "[rx_predict_batch()] Predicted."
RX_SLOW_FLOW_SKIPPED = "[rx_predict_batch()] Skipping flow events below v_min."

FLOW_ESTIMATING = "[estimate_flows()] Estimating flow..."
FLOW_ESTIMATED = "[estimate_flows()] Estimated flow."
FLOW_OPTIONS_IGNORED = "[FlowProvider()] Ignoring unknown provider options."

METRICS_CUBES = "[astsm_distance()] Computing cube distances..."
METRICS_DONE = "[evaluate()] Metrics ready."
METRICS_CLIPPED = "[measure_fidelity()] Left reconstructed events past the source's end out of the measures."

CASCADE_COMPRESSED = "[cascade_compress()] Compressed."
CASCADE_DECOMPRESSED = "[cascade_decompress()] Decompressed."

SYNTH_OBJECT = "[generate()] Synthesized object events."
SYNTH_DONE = "[generate()] Scene ready."

IO_READ = "[read_events()] Read events."
IO_WROTE = "[write_events()] Wrote events."
IO_SORTED_ON_LOAD = "[read_events()] Input was not sorted. Sorted on load."

PIPELINE_SIMULATING = "[simulate()] Running tx -> rx -> metrics..."
PIPELINE_SIMULATED = "[simulate()] Simulation done."
PIPELINE_SWEEP_POINT = "[sweep_pt()] Sweep point done."

BENCH_POINT = "[run_bench()] Bench point done."
