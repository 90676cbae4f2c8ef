"""Train on the synthetic league, score the held-out split, then chat.

The corpus generator invents a small football league (5 teams, 5 facts
each) and phrases every test-split question with wordings that never
occur in training — so good scores require actually copying from the
KG, not parroting memorized sentences.

Run:  python3 demos/02_train_eval_chat.py
(first run trains for ~30 seconds; artifacts land in demo-output/)
"""

from common import CORPUS, ensure_checkpoint

from kgcopy.corpus import load_dialogues
from kgcopy.kg import load_kg_dir
from kgcopy.metrics import evaluate_split
from kgcopy.model import load_checkpoint
from kgcopy.pipeline import build_examples
from kgcopy.serve import ChatEngine
from kgcopy.vectors import table_from_array


def main():
    print(__doc__)
    checkpoint = ensure_checkpoint()

    model, vocab, static, unk, meta = load_checkpoint(checkpoint)
    table = table_from_array(vocab.tokens, static, unk=unk)
    kgs = load_kg_dir(CORPUS / "kg")
    cfg = meta["config"]
    print(f"loaded checkpoint: vocab {vocab.v} tokens, "
          f"best epoch {meta['metrics']['epoch']} "
          f"(valid BLEU {meta['metrics']['bleu']:.2f})\n")

    # ------------------------------------------- held-out template scores
    dialogues = load_dialogues(CORPUS / "test.jsonl")
    examples = build_examples(
        dialogues, kgs, vocab, window=cfg["window"],
        threshold=cfg["link_threshold"],
        max_context_len=cfg["max_context_len"],
        max_target_len=cfg["max_target_len"])
    report = evaluate_split(model, vocab, table, dialogues, examples, kgs,
                            split="test", max_len=cfg["max_decode_len"])
    print(report.format_table())

    # ------------------------------------------------- scripted chat turns
    team = "southern_eagles"
    engine = ChatEngine(model, vocab, table, kgs, window=cfg["window"],
                        max_decode_len=cfg["max_decode_len"])
    session = engine.new_session(team)
    print(f"\nchatting about {team.replace('_', ' ')}:")
    for question in ("hello !",
                     "who is the coach of southern eagles ?",
                     "where is the home ground of southern eagles ?",
                     "when were southern eagles founded ?",
                     "what is the jersey color of southern eagles ?",
                     "do you like football ?"):
        reply = engine.chat_turn(session, question)
        peak = max(reply["gate_trace"], default=0.0)
        print(f"\n  you> {question}")
        print(f"  bot> {reply['text']}   (peak gate {peak:.2f})")
        for span in reply["spans"]:
            if span["source"] == "kg":
                s, r, o = span["triple_sro"]
                piece = reply["text"][span["start"]:span["end"]].strip()
                print(f"       [kg] {piece!r} copied from ({s}, {r}, {o})")

    print("\nnote how the gate peaks on factual answers and stays low on")
    print("chit-chat - that is the sentient gate doing its job.")


if __name__ == "__main__":
    main()
