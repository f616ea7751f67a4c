export {
  PROTOCOL_VERSION,
  MESSAGE_TYPES,
  WireFormatError,
  wireMessageSchema,
  parseMessage,
  serializeMessage,
} from "./wire.js";
export type { MessageType, WireMessage } from "./wire.js";
export { serve } from "./protocol.js";
export type {
  ForecastOutcome,
  ForecastRequest,
  Forecaster,
  ServeOptions,
} from "./protocol.js";
export { parsePool, readPool } from "./pool.js";
export type { TrainingPool, TrainingWindow } from "./pool.js";
export {
  LOG_FLOOR,
  fitScaling,
  logRate,
  scaleRate,
  unscaleRate,
} from "./scaling.js";
export type { ScalingStats } from "./scaling.js";
export { EndpointClient, EndpointError } from "./endpoint.js";
export type {
  EndpointForecast,
  ForecastRequestBody,
  SeriesRequest,
} from "./endpoint.js";
export {
  CHRONOS_MODEL_IDS,
  CHRONOS_SIZES,
  ChronosForecaster,
  DEFAULT_CONTEXT,
  DEFAULT_NUM_SAMPLES,
  median,
  medianTrajectory,
} from "./chronos.js";
export type { ChronosConfig, ChronosSize } from "./chronos.js";
export {
  DEFAULT_TIMESFM_CONTEXT,
  DEFAULT_TIMESFM_FREQ,
  DEFAULT_TIMESFM_MODEL,
  TimesFmForecaster,
} from "./timesfm.js";
export type { TimesFmConfig } from "./timesfm.js";
export {
  DEFAULT_BATCH_SIZE,
  DEFAULT_EPOCHS,
  DEFAULT_SEED,
  LSTM_UNITS,
  LstmForecaster,
  buildModel,
  loadArtifact,
  saveArtifact,
  trainLstm,
} from "./lstm.js";
export type { LstmConfig, TrainedLstm, TrainParams } from "./lstm.js";
