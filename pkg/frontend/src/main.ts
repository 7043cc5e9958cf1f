/**
 * DOM wiring for the four-pane playground:
 * user query / database / prompt template / model output.
 */

import { PocketAnnClient } from './api.js';
import { PlaygroundController } from './controller.js';
import type { PlaygroundState } from './controller.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function main(): void {
  const client = new PocketAnnClient('');
  const controller = new PlaygroundController(client);

  const queryInput = el<HTMLTextAreaElement>('user-query');
  const runButton = el<HTMLButtonElement>('run-button');
  const kSlider = el<HTMLInputElement>('k-slider');
  const kLabel = el<HTMLSpanElement>('k-label');
  const collectionInput = el<HTMLInputElement>('collection-name');
  const uploadInput = el<HTMLInputElement>('corpus-upload');
  const progressBar = el<HTMLProgressElement>('build-progress');
  const collectionStats = el<HTMLSpanElement>('collection-stats');
  const resultsBody = el<HTMLTableSectionElement>('results-body');
  const templateInput = el<HTMLTextAreaElement>('prompt-template');
  const promptView = el<HTMLPreElement>('assembled-prompt');
  const outputView = el<HTMLPreElement>('model-output');
  const modelPicker = el<HTMLSelectElement>('model-picker');
  const errorBanner = el<HTMLDivElement>('error-banner');

  templateInput.value = controller.getState().template;
  const savedTemplate = localStorage.getItem('pocketann.template');
  if (savedTemplate) {
    templateInput.value = savedTemplate;
    controller.setTemplate(savedTemplate);
  }

  function render(state: PlaygroundState): void {
    runButton.disabled = !controller.canRun();
    kLabel.textContent = String(state.k);

    errorBanner.hidden = state.error === null;
    errorBanner.textContent = state.error ?? '';

    progressBar.hidden = state.buildProgress === null;
    if (state.buildProgress !== null) progressBar.value = state.buildProgress;

    collectionStats.textContent = state.activeCollection
      ? `${state.activeCollection}: ${state.collectionCount} documents`
      : 'no collection loaded';

    resultsBody.replaceChildren(
      ...state.results.map((row) => {
        const tr = document.createElement('tr');
        const key = document.createElement('td');
        key.textContent = row.key;
        const distance = document.createElement('td');
        distance.className = 'distance';
        distance.textContent = row.distance.toFixed(6);
        const text = document.createElement('td');
        text.className = 'doc-text';
        text.textContent = row.text ?? '';
        tr.append(key, distance, text);
        return tr;
      }),
    );

    promptView.textContent = state.assembledPrompt ?? '(run a query to assemble the prompt)';
    if (state.completion !== null) {
      outputView.textContent = state.completion;
    } else {
      outputView.textContent = state.completionNote ?? '(no output yet)';
    }
  }

  controller.subscribe(render);
  render(controller.getState());

  queryInput.addEventListener('input', () => controller.setUserQuery(queryInput.value));
  kSlider.addEventListener('input', () => controller.setK(Number(kSlider.value)));
  templateInput.addEventListener('input', () => {
    controller.setTemplate(templateInput.value);
    localStorage.setItem('pocketann.template', templateInput.value);
  });
  modelPicker.addEventListener('change', () => {
    controller.setModel(modelPicker.value === 'remote' ? 'remote' : 'none');
  });
  runButton.addEventListener('click', () => void controller.run());
  queryInput.addEventListener('keydown', (event) => {
    if (event.key === 'Enter' && (event.ctrlKey || event.metaKey)) void controller.run();
  });

  uploadInput.addEventListener('change', async () => {
    const file = uploadInput.files?.[0];
    if (!file) return;
    const name = collectionInput.value.trim() || 'playground';
    await controller.uploadCorpus(name, await file.text());
    uploadInput.value = '';
  });

  collectionInput.addEventListener('change', () => {
    const name = collectionInput.value.trim();
    if (name) void controller.selectCollection(name);
  });

  // pick up an existing collection on load so refreshes keep working
  void client
    .listCollections()
    .then((collections) => {
      const first = collections[0];
      if (first) {
        collectionInput.value = first.name;
        void controller.selectCollection(first.name);
      }
    })
    .catch(() => undefined);
}

main();
