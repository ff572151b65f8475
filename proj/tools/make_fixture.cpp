// Writes a synthetic city (events, roads, POIs, districts) into a directory.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "stm/pipeline.hpp"
#include "stm/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a deterministic synthetic city fixture"};
  std::string dir;
  stm::synthetic::CityParams p;
  app.add_option("dir", dir, "Output directory")->required();
  app.add_option("--events", p.events, "Number of events");
  app.add_option("--days", p.days, "Days covered");
  app.add_option("--width", p.width, "Extent width (m)");
  app.add_option("--height", p.height, "Extent height (m)");
  app.add_option("--hotspots", p.hotspots, "Number of hotspots");
  app.add_option("--sigma", p.sigma, "Hotspot spread (m)");
  app.add_option("--street-spacing", p.street_spacing, "Street lattice pitch (m)");
  app.add_option("--pois", p.pois, "Number of POIs");
  app.add_option("--seed", p.seed, "Random seed");
  CLI11_PARSE(app, argc, argv);

  try {
    namespace fs = std::filesystem;
    stm::synthetic::City city(p);
    const fs::path out = dir;
    stm::pipeline::write_file_atomic(out / "events.csv", city.events_csv());
    stm::pipeline::write_file_atomic(out / "roads.geojson", city.roads_geojson());
    stm::pipeline::write_file_atomic(out / "poi.csv", city.pois_csv());
    stm::pipeline::write_file_atomic(out / "districts.geojson", city.districts_geojson());
  } catch (const std::exception& e) {
    std::cerr << "make_fixture: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
