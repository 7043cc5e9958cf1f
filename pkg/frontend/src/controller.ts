/**
 * Playground state machine, independent of the DOM.
 *
 * The UI layer renders this state and forwards events; everything shown in
 * the four panes (result keys, distances, texts, the assembled prompt, the
 * model output) is taken verbatim from service responses.
 */

import { ApiError, PocketAnnClient } from './api.js';
import type { BuildStatus, DocumentIn } from './api.js';
import { corpusDimension, parseCorpus } from './corpus.js';

export type ModelChoice = 'none' | 'remote';

export interface ResultRow {
  key: string;
  distance: number;
  text: string | null;
}

export interface PlaygroundState {
  activeCollection: string | null;
  collectionCount: number;
  userQuery: string;
  template: string;
  k: number;
  model: ModelChoice;
  results: ResultRow[];
  assembledPrompt: string | null;
  completion: string | null;
  completionNote: string | null;
  buildProgress: number | null; // 0..1 while a build runs, null otherwise
  running: boolean;
  error: string | null;
}

export const DEFAULT_TEMPLATE =
  'You are a helpful assistant. Answer the question using only the context.\n\n' +
  'Question: {{user}}\n\nContext:\n{{context}}\n\nAnswer:';

const BUILD_POLL_MS = 150;

type Listener = (state: PlaygroundState) => void;
type Sleep = (ms: number) => Promise<void>;

const defaultSleep: Sleep = (ms) => new Promise((resolve) => setTimeout(resolve, ms));

export class PlaygroundController {
  readonly client: PocketAnnClient;
  private readonly sleep: Sleep;
  private listeners: Listener[] = [];
  private state: PlaygroundState = {
    activeCollection: null,
    collectionCount: 0,
    userQuery: '',
    template: DEFAULT_TEMPLATE,
    k: 10,
    model: 'remote',
    results: [],
    assembledPrompt: null,
    completion: null,
    completionNote: null,
    buildProgress: null,
    running: false,
    error: null,
  };

  constructor(client: PocketAnnClient, sleep: Sleep = defaultSleep) {
    this.client = client;
    this.sleep = sleep;
  }

  getState(): PlaygroundState {
    return { ...this.state, results: [...this.state.results] };
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private update(patch: Partial<PlaygroundState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.getState());
  }

  setUserQuery(text: string): void {
    this.update({ userQuery: text });
  }

  setTemplate(text: string): void {
    this.update({ template: text });
  }

  setK(k: number): void {
    this.update({ k: Math.max(1, Math.floor(k)) });
  }

  setModel(model: ModelChoice): void {
    // switching models never touches the retrieval panes
    this.update({ model });
  }

  canRun(): boolean {
    return (
      this.state.userQuery.trim().length > 0 &&
      this.state.activeCollection !== null &&
      this.state.buildProgress === null &&
      !this.state.running
    );
  }

  async selectCollection(name: string): Promise<void> {
    try {
      const descriptor = await this.client.getCollection(name);
      this.update({ activeCollection: descriptor.name, collectionCount: descriptor.count, error: null });
    } catch (err) {
      this.update({ error: describe(err) });
    }
  }

  /**
   * Database View: parse an uploaded corpus, create the collection when it
   * does not exist yet, and feed the build-progress bar from the status
   * endpoint until the background build settles.
   */
  async uploadCorpus(name: string, fileText: string): Promise<void> {
    let items: DocumentIn[];
    try {
      items = parseCorpus(fileText);
      if (items.length === 0) throw new Error('corpus file has no records');
    } catch (err) {
      this.update({ error: describe(err) });
      return;
    }
    this.update({ error: null, buildProgress: 0 });
    try {
      let exists = true;
      try {
        await this.client.getCollection(name);
      } catch (err) {
        if (err instanceof ApiError && err.status === 404) exists = false;
        else throw err;
      }
      if (!exists) {
        await this.client.createCollection(name, corpusDimension(items));
      }
      await this.client.addDocumentsInBackground(name, items);
      let status: BuildStatus = await this.client.buildStatus(name);
      while (status.state === 'running') {
        this.update({ buildProgress: status.progress });
        await this.sleep(BUILD_POLL_MS);
        status = await this.client.buildStatus(name);
      }
      this.update({ buildProgress: status.progress });
      if (status.state !== 'done') {
        throw new Error(status.error ?? `build ${status.state}`);
      }
      const descriptor = await this.client.getCollection(name);
      this.update({
        activeCollection: descriptor.name,
        collectionCount: descriptor.count,
        buildProgress: null,
      });
    } catch (err) {
      this.update({ error: describe(err), buildProgress: null });
    }
  }

  /**
   * The Run button: retrieve, substitute the prompt placeholders, and (when
   * a model is selected) generate - all server-side, rendered verbatim.
   */
  async run(): Promise<void> {
    if (!this.canRun()) return;
    const name = this.state.activeCollection as string;
    this.update({ running: true, error: null });
    try {
      const wantCompletion = this.state.model === 'remote';
      const response = await this.client.runPrompt(
        name,
        this.state.template,
        this.state.userQuery,
        this.state.k,
        wantCompletion,
      );
      const rows: ResultRow[] = response.retrieved.keys.map((key, i) => ({
        key,
        distance: response.retrieved.distances[i] as number,
        text: response.retrieved.texts[i] ?? null,
      }));
      let note: string | null = null;
      if (!wantCompletion) {
        note = 'No model selected - showing retrieval and the assembled prompt only.';
      } else if (response.completion === null) {
        note = response.warning ?? 'No completion endpoint is configured on the service.';
      }
      this.update({
        results: rows,
        assembledPrompt: response.prompt,
        completion: response.completion,
        completionNote: note,
        running: false,
      });
    } catch (err) {
      this.update({ error: describe(err), running: false });
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return err.line != null ? `${err.code}: ${err.message} (line ${err.line})` : `${err.code}: ${err.message}`;
  }
  if (err instanceof Error) return err.message;
  return String(err);
}
