/**
 * DOM wiring for the chat page. All protocol and rendering logic lives
 * in lib.ts; this file only moves data between it and the document.
 */

import { ApiError, botEntry, ChatApi, entryHtml, TranscriptEntry, userEntry } from "./lib.js";

const api = new ChatApi("");

const teamSelect = document.getElementById("team") as HTMLSelectElement;
const transcript = document.getElementById("transcript") as HTMLElement;
const form = document.getElementById("composer") as HTMLFormElement;
const input = document.getElementById("message") as HTMLInputElement;
const sendButton = document.getElementById("send") as HTMLButtonElement;
const banner = document.getElementById("banner") as HTMLElement;
const bannerText = document.getElementById("banner-text") as HTMLElement;
const retryButton = document.getElementById("retry") as HTMLButtonElement;

let sessionId: string | null = null;
let inFlight = false;
let lastFailed: (() => Promise<void>) | null = null;

function setBusy(busy: boolean): void {
  inFlight = busy;
  input.disabled = busy || sessionId === null;
  sendButton.disabled = busy || sessionId === null;
  teamSelect.disabled = busy;
}

function showError(err: unknown, retry: (() => Promise<void>) | null): void {
  const message =
    err instanceof ApiError ? err.message :
    err instanceof Error ? `${err.message} — is the server running?` :
    String(err);
  bannerText.textContent = message;
  retryButton.hidden = retry === null;
  lastFailed = retry;
  banner.hidden = false;
}

function clearError(): void {
  banner.hidden = true;
  lastFailed = null;
}

function appendEntry(entry: TranscriptEntry): void {
  const row = document.createElement("div");
  row.className = `entry ${entry.speaker}`;
  const who = document.createElement("span");
  who.className = "who";
  who.textContent = entry.speaker;
  const body = document.createElement("span");
  body.className = "body";
  body.innerHTML = entryHtml(entry);
  row.append(who, body);
  transcript.append(row);
  transcript.scrollTop = transcript.scrollHeight;
}

async function guard(action: () => Promise<void>): Promise<void> {
  if (inFlight) return;
  clearError();
  setBusy(true);
  try {
    await action();
  } catch (err) {
    showError(err, action);
  } finally {
    setBusy(false);
  }
}

async function startSession(): Promise<void> {
  sessionId = null;
  transcript.replaceChildren();
  const team = teamSelect.value;
  if (!team) return;
  sessionId = await api.createSession(team);
  input.focus();
}

async function sendCurrentMessage(): Promise<void> {
  const text = input.value.trim();
  if (!text || sessionId === null) return;
  appendEntry(userEntry(text));
  input.value = "";
  const response = await api.sendMessage(sessionId, text);
  appendEntry(botEntry(response));
}

async function loadTeams(): Promise<void> {
  const teams = await api.teams();
  teamSelect.replaceChildren(new Option("pick a team…", "", true, true));
  (teamSelect.options[0] as HTMLOptionElement).disabled = true;
  for (const team of teams) {
    teamSelect.append(new Option(team.replace(/_/g, " "), team));
  }
  teamSelect.disabled = false;
}

teamSelect.addEventListener("change", () => void guard(startSession));
form.addEventListener("submit", (event) => {
  event.preventDefault();
  void guard(sendCurrentMessage);
});
retryButton.addEventListener("click", () => {
  const action = lastFailed;
  if (action) void guard(action);
});

setBusy(false);
void guard(loadTeams);
