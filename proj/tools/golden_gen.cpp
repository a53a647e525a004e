// Regenerates the committed golden vectors (64-bit build of the reference
// graphs). Run from the repository root: build/golden_gen tests/golden/golden.dlph

#include <iostream>

#include "avsep/io.hpp"
#include "avsep/pipeline.hpp"

using namespace avsep;

namespace {

// Small but structurally complete config: Q=3 so the auxiliary estimate and
// every decoder stage participate.
model_config golden_config() {
  model_config cfg = model_config::micro();
  cfg.q_levels = 3;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string out = argc > 1 ? argv[1] : "tests/golden/golden.dlph";
  std::vector<dlph_entry> entries;

  {
    param_store<double> ps(41);
    hda_layer<double> layer(ps, "hda", 8);
    rng g(42);
    var<double> x = constant(random_tensor<double>(g, {8, 32}, -1.0, 1.0));
    entries.push_back(dlph_entry::from("hda_in", x->value));
    entries.push_back(dlph_entry::from("hda_out", layer(x)->value));
  }

  {
    const model_config cfg = golden_config();
    dolphin<double> model(cfg, 43);
    model.freeze_video();
    const i64 L = 256, t_v = 4;
    model.cfg.sample_rate = L;
    model.cfg.video_fps = t_v;
    rng g(44);
    tensor<double> mix = random_tensor<double>(g, {1, L}, -0.5, 0.5);
    tensor<double> vid = random_tensor<double>(g, {1, cfg.video_size, cfg.video_size, t_v}, 0, 1);
    eval_guard<double> guard(model.ps);
    auto vt = model.encode_video(vid);
    auto fo = model.forward(mix, vt);
    entries.push_back(dlph_entry::from("micro_mix", mix));
    entries.push_back(dlph_entry::from("micro_video", vid));
    entries.push_back(dlph_entry::from("micro_est", fo.est->value));
    entries.push_back(dlph_entry::from("micro_est3", fo.est3->value));
  }

  dlph_write(out, entries);
  std::cout << "wrote " << entries.size() << " golden tensors to " << out << "\n";
  return 0;
}
