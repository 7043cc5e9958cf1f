/**
 * Typed client for the pocketann HTTP API (see API.md at the repo root).
 *
 * The fetch implementation is injectable so logic tests can run without a
 * server. Every numeric value in responses is passed through verbatim; the
 * UI performs no retrieval math of its own.
 */

export interface CollectionDescriptor {
  name: string;
  dimension: number;
  metric: string;
  m: number;
  m_max0: number;
  ef_construction: number;
  m_l: number;
  seed: number;
  p: number;
  cache_capacity: number;
  count: number;
}

export interface DocumentIn {
  key: string;
  vector: number[];
  text?: string | null;
}

export interface BuildStatus {
  state: 'idle' | 'running' | 'done' | 'cancelled' | 'failed';
  progress: number;
  inserted: number;
  total: number;
  error: string | null;
}

export interface QueryResponse {
  keys: string[];
  distances: number[];
  texts: (string | null)[];
}

export interface PromptResponse {
  retrieved: QueryResponse;
  prompt: string;
  completion: string | null;
  warning: string | null;
}

export interface ServiceConfig {
  data_dir: string;
  embedding_configured: boolean;
  llm_configured: boolean;
  timeout_ms: number;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  line?: number | null;
}

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly line: number | null;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.status = status;
    this.code = body.code;
    this.line = body.line ?? null;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let body: ApiErrorBody = { code: `http-${response.status}`, message: response.statusText };
  try {
    const parsed = await response.json();
    if (parsed && typeof parsed === 'object' && 'error' in parsed) {
      body = (parsed as { error: ApiErrorBody }).error;
    } else if (parsed && typeof parsed === 'object' && 'detail' in parsed) {
      body = { code: 'validation', message: JSON.stringify((parsed as { detail: unknown }).detail) };
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, body);
}

export class PocketAnnClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, '');
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.base}${path}`, init);
    await raiseForStatus(response);
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  config(): Promise<ServiceConfig> {
    return this.request<ServiceConfig>('/config');
  }

  listCollections(): Promise<CollectionDescriptor[]> {
    return this.request<CollectionDescriptor[]>('/collections');
  }

  getCollection(name: string): Promise<CollectionDescriptor> {
    return this.request<CollectionDescriptor>(`/collections/${encodeURIComponent(name)}`);
  }

  createCollection(name: string, dimension: number, metric = 'cosine'): Promise<CollectionDescriptor> {
    return this.post<CollectionDescriptor>('/collections', { name, dimension, metric });
  }

  /** Starts a background build; poll buildStatus for progress. */
  addDocumentsInBackground(name: string, items: DocumentIn[]): Promise<BuildStatus> {
    return this.post<BuildStatus>(`/collections/${encodeURIComponent(name)}/documents`, {
      items,
      wait: false,
    });
  }

  buildStatus(name: string): Promise<BuildStatus> {
    return this.request<BuildStatus>(`/collections/${encodeURIComponent(name)}/build`);
  }

  queryByText(name: string, text: string, k: number): Promise<QueryResponse> {
    return this.post<QueryResponse>(`/collections/${encodeURIComponent(name)}/query`, { text, k });
  }

  runPrompt(
    name: string,
    template: string,
    userQuery: string,
    k: number,
    complete = true,
  ): Promise<PromptResponse> {
    return this.post<PromptResponse>(`/collections/${encodeURIComponent(name)}/prompt`, {
      template,
      user_query: userQuery,
      k,
      complete,
    });
  }
}
