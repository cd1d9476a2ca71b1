// Writes the visual-only aggregation report for the given inputs straight from
// the library, stamped the way the CLI stamps its outputs.
// usage: aggregation_fixture scenario.json hand.json object.json heatmaps.bin out.json

#include "graspforge/aggregate.hpp"
#include "graspforge/pipeline.hpp"

#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
  using namespace graspforge;
  if (argc != 6) {
    std::cerr << "usage: aggregation_fixture scenario hand object heatmaps out\n";
    return 2;
  }
  const Scenario s = load_scenario(argv[1]);
  const auto stacks = load_heatmaps(argv[4]);
  AggregationConfig cfg;
  cfg.physics = false;
  const HeatmapStack* hand = nullptr;
  const HeatmapStack* object = nullptr;
  for (const auto& st : stacks) {
    if (st.channels == kNumKeypoints) hand = &st;
    if (st.channels == 27) object = &st;
  }
  if (!hand || !object) {
    std::cerr << "heatmap file lacks a 21- or 27-channel stack\n";
    return 3;
  }
  nlohmann::json j = aggregate_full(s, load_candidates(argv[2]), load_candidates(argv[3]), *hand, *object, cfg).to_json();
  j["seed"] = s.seed;
  j["config"] = cfg.to_json();
  j["config_hash"] = config_hash(cfg.to_json());
  std::ofstream(argv[5], std::ios::binary) << j.dump(2) << '\n';
  return 0;
}
