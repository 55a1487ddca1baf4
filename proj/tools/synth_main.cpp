// Writes synthetic datasets with known ground truth for smoke tests and demos.

#include <CLI11.hpp>

#include <iostream>

#include "densecorr/synthetic.hpp"

int main(int argc, char** argv) {
  namespace syn = densecorr::synthetic;
  CLI::App app{"Synthetic datasets for densecorr"};
  app.require_subcommand(1);
  std::string dir;
  std::uint64_t seed = 0;
  app.add_option("--out-dir", dir, "Dataset directory")->required();
  app.add_option("--seed", seed)->capture_default_str();

  syn::WarpedFamilyOptions w;
  auto* warped = app.add_subcommand("warped", "Smoothly deformed copies of one textured image");
  warped->add_option("--instances", w.instances)->capture_default_str();
  warped->add_option("--side", w.side)->capture_default_str();
  warped->add_option("--keypoints", w.keypoints)->capture_default_str();
  warped->add_option("--max-displacement", w.max_displacement)->capture_default_str();
  warped->add_option("--wavelength", w.wavelength)->capture_default_str();
  warped->add_option("--category", w.category)->capture_default_str();

  syn::PlantedOptions p;
  auto* planted = app.add_subcommand("planted", "Feature grids with planted keypoint signatures");
  planted->add_option("--instances", p.instances)->capture_default_str();
  planted->add_option("--dim", p.dim)->capture_default_str();
  planted->add_option("--signal", p.signal)->capture_default_str();
  planted->add_option("--noise", p.noise)->capture_default_str();
  planted->add_option("--layer", p.layer)->capture_default_str();
  planted->add_option("--category", p.category)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*warped) syn::write_warped_family(dir, w, seed);
    if (*planted) syn::write_planted(dir, p, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  std::cout << dir << "/manifest.tsv\n";
  return 0;
}
