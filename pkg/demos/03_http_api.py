"""Talk to the chat model over HTTP, the way the browser UI does.

Starts the bundled server on an ephemeral port, walks the wire
protocol (list teams, open a session, send messages), and shows how
the byte-offset spans in each response attribute every character of
the reply to either the vocabulary or a specific KG triple.

Run:  python3 demos/03_http_api.py
(reuses the checkpoint from demo 02, training it first if needed)
"""

import json
import threading
import urllib.request

from common import CORPUS, ensure_checkpoint

from kgcopy.kg import load_kg_dir
from kgcopy.model import load_checkpoint
from kgcopy.serve import ChatEngine, make_server
from kgcopy.vectors import table_from_array

GREEN = "\033[42;30m"
RESET = "\033[0m"


def call(base, method, path, payload=None):
    data = json.dumps(payload).encode() if payload is not None else None
    req = urllib.request.Request(base + path, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


def highlight(text, spans):
    """Rebuild the reply with KG-copied spans highlighted."""
    out = []
    for span in spans:
        piece = text[span["start"]:span["end"]]
        if span["source"] == "kg":
            out.append(f"{GREEN}{piece.rstrip()}{RESET}"
                       + piece[len(piece.rstrip()):])
        else:
            out.append(piece)
    return "".join(out)


def main():
    print(__doc__)
    checkpoint = ensure_checkpoint()
    model, vocab, static, unk, meta = load_checkpoint(checkpoint)
    table = table_from_array(vocab.tokens, static, unk=unk)
    kgs = load_kg_dir(CORPUS / "kg")
    cfg = meta["config"]
    engine = ChatEngine(model, vocab, table, kgs, window=cfg["window"],
                        max_decode_len=cfg["max_decode_len"])

    server = make_server(engine, host="127.0.0.1", port=0)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    host, port = server.server_address
    base = f"http://{host}:{port}"
    print(f"server listening on {base}\n")

    print("GET /teams")
    teams = call(base, "GET", "/teams")
    print(f"  -> {teams}\n")

    print('POST /sessions {"team": "western_wolves"}')
    session = call(base, "POST", "/sessions", {"team": "western_wolves"})
    print(f"  -> {session}\n")
    sid = session["session_id"]

    for text in ("who is the coach of western wolves ?",
                 "what is the jersey color of western wolves ?"):
        print(f'POST /sessions/{{id}}/messages {{"text": {text!r}}}')
        reply = call(base, "POST", f"/sessions/{sid}/messages",
                     {"text": text})
        print("  -> " + json.dumps(reply, indent=5)[:600])
        print("\n  rendered with spans (copied text highlighted):")
        print("    " + highlight(reply["text"], reply["spans"]) + "\n")

    server.shutdown()
    server.server_close()
    print("every character of the reply belongs to exactly one span, so a")
    print("client can rebuild and highlight the text without re-tokenizing;")
    print("the browser UI under frontend/ consumes exactly this payload")
    print("(build it, then: kgcopy serve --checkpoint demo-output/run/model.npz"
          " --kg-dir demo-output/corpus/kg --ui-dir frontend/dist)")


if __name__ == "__main__":
    main()
