"""
Corpora on disk and object-list perturbation
============================================

Build a small photo-sharing corpus, round-trip it through JSONL, and
degrade the photo metadata the way the robustness studies do.
"""

import tempfile
from pathlib import Path

from photoseek import load_corpus, perturb_objects, render_object_list, save_corpus
from photoseek.corpus import affected_count
from photoseek.synthetic import token_corpus

# A corpus is photos (id, image_ref, object list) plus dialogues (turns,
# sharer, optional target photo). token_corpus fabricates one with
# deterministic token vocabulary so every run looks the same.
corpus = token_corpus(n_photos=6, seed=5)
print(f"{len(corpus.photos)} photos, {len(corpus.dialogues)} dialogues")

photo = corpus.photos[0]
print("first photo:", photo.id, photo.objects)
print("rendered for the text encoder:", repr(render_object_list(photo.objects)))

dialogue = corpus.dialogues[0]
print("first dialogue shares", dialogue.target_photo_id)
for turn in dialogue.turns[:2]:
    print(f"  {turn.speaker}: {turn.text}")

# Round-trip through the JSONL format. Saving what we loaded writes the
# same bytes, which is what makes cached artifacts comparable.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "corpus.jsonl"
    save_corpus(corpus, path)
    reloaded = load_corpus(path)
    again = Path(tmp) / "again.jsonl"
    save_corpus(reloaded, again)
    print("stable on disk:", path.read_bytes() == again.read_bytes())

# Perturbation drops (or swaps) a fixed share of each photo's objects.
# The count per photo is round(rate * n), half rounding up.
for n in range(1, 7):
    print(f"rate 0.35 touches {affected_count(0.35, n)} of {n} objects")

# mode="missing" removes objects; mode="incorrect" replaces them with
# other vocabulary entries; "both" does half and half. Same seed, same
# corruption.
noisy = perturb_objects(corpus, rate=0.35, mode="missing", seed=0)
for before, after in zip(corpus.photos[:3], noisy.photos[:3]):
    print(f"{before.id}: {before.objects} -> {after.objects}")

# The original corpus is never modified in place.
print("original intact:", corpus.photos[0].objects == photo.objects)
