/** Wire types mirroring the ctcsim service JSON payloads. */

export interface TaskRow {
  name: string;
  variant: string;
  n_subtasks: number;
  n_agents: number;
  n_enemies: number;
  episode_limit: number;
}

export interface TaskDetail {
  name: string;
  variant: string;
  n_agents: number;
  n_enemies: number;
  n_actions: number;
  obs_size: number;
  state_size: number;
  episode_limit: number;
  document: Record<string, unknown>;
}

export interface Violation {
  code: string;
  message: string;
}

export interface ValidateResponse {
  valid: boolean;
  violations: Violation[];
}

export interface SessionInfo {
  session_id: string;
  task: string;
  seed: number;
  n_agents: number;
  n_actions: number;
  obs_size: number;
  state_size: number;
  config_hash: string;
  observations: number[][];
  state: number[];
  masks: boolean[][];
}

export interface StepResult {
  observations: number[][];
  state: number[];
  masks: boolean[][];
  reward: number;
  terminated: boolean;
  won: boolean;
  failed_subtask: number | null;
  info: Record<string, number>;
  effective_actions: number[];
}

export interface ReplayStreams {
  rewards: number[];
  terminated: boolean[];
  won: boolean[];
  failed_subtask: number | null;
  steps: number;
}

export interface ServiceStats {
  open_sessions: number;
  rss_bytes: number;
  version: string;
}
