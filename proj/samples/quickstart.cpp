// End-to-end run on a small synthetic dataset: generate, align, probe, score.
// Takes a few minutes on one core.

#include "brantx/brantx.hpp"

#include <iostream>

int main() {
  using namespace brantx;

  SynthConfig sc;
  sc.n_pairs = 150;
  sc.seed = 1;
  const auto pairs = generate(sc);

  ModelConfig mc;
  mc.encoder = EncoderConfig::desk();
  const SplitIndices split = split_subject_independent(pairs, 0);
  const Index patches = common_patch_count(pairs.front(), mc.window_sec);
  const auto train = prepare_pairs(select(pairs, split.train), mc, patches);
  const auto val = prepare_pairs(select(pairs, split.val), mc, patches);
  const auto test = prepare_pairs(select(pairs, split.test), mc, patches);

  auto model = AlignmentModel::with_stand_in(mc, sc.eeg_channels, sc.exg_channels, patches, 0);
  AlignConfig ac;
  ac.epochs = 10;
  const AlignResult ar = train_align(train, model, ac);
  std::cout << "alignment loss " << ar.trace.front().total << " -> " << ar.trace.back().total << "\n";
  std::cout << "held-out retrieval top-1 " << retrieval_top1(test, model) << "\n";

  const auto sim = similarity_matrix(test[0], test[1], model);
  std::cout << "within-pair minus cross-pair similarity " << similarity_contrast(sim) << "\n";

  ProbeConfig pc;
  const ProbeResult pr = train_probe(train, val, model, pc);
  const ClassifyResult cr = classify(test, model, pr.head, pc.mode);
  std::cout << to_json(cr.report).dump(2) << "\n";
}
