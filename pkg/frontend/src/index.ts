export { BoundEnv, ClosedHandleError, CtcClient, ServiceError } from "./client.js";
export type {
  ReplayStreams,
  ServiceStats,
  SessionInfo,
  StepResult,
  TaskDetail,
  TaskRow,
  ValidateResponse,
  Violation,
} from "./types.js";
