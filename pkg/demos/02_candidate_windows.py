#!/usr/bin/env python3
"""Candidate-instance preprocessing: windows, masking, distances, labels.

Walks the pipeline over a small annotated document: pair filtering by
sentence distance, the three-token expansion window, focal-mention
removal, gene0 collapsing, NUMBER replacement and the dual distance
sequences.
"""

from ksm.corpus import (Document, Mention, build_context_window,
                        generate_candidate_pairs, preprocess_document,
                        sorted_pair)

doc = Document(
    doc_id="demo",
    sentences=[
        ["Binding", "of", "RAD51", "to", "BRCA2", "requires", "42",
         "residues", "*"],
        ["the", "TP53", "tumor", "suppressor", "is", "unaffected"],
        ["unrelated", "sentence", "without", "mentions"],
        ["ATM", "appears", "far", "away"],
    ],
    mentions=[
        Mention("rad51", 0, (2, 3)),
        Mention("brca2", 0, (4, 5)),
        Mention("tp53", 1, (1, 2)),
        Mention("atm", 3, (0, 1)),
    ],
    gold_relations={sorted_pair("rad51", "brca2")},
)

pairs = generate_candidate_pairs(doc)
print(f"{len(pairs)} candidate pairs (sentence distance < 3):")
for m1, m2 in pairs:
    print(f"  {m1.entity_id} (s{m1.sentence_index}) -- "
          f"{m2.entity_id} (s{m2.sentence_index})")
print("note: atm sits 3 sentences from rad51/brca2 and is filtered out\n")

m1, m2 = pairs[0]
inst = build_context_window(doc, m1, m2)
print(f"window for ({m1.entity_id}, {m2.entity_id}):")
print(f"  {'token':<12}{'dist to m1':>11}{'dist to m2':>12}")
for tok, p1, p2 in zip(inst.tokens, inst.pos1, inst.pos2):
    print(f"  {tok:<12}{p1:>11}{p2:>12}")
print("(the focal mentions are gone, 42 became NUMBER, * was stripped,"
      " distances skip the focal spans)\n")

instances = preprocess_document(doc, phase="train")
print("labeled instances:")
for inst in instances:
    print(f"  {inst.pair}: {inst.label:<9} tokens={inst.tokens}")
