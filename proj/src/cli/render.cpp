// Copyright 2026 The ecdiff Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ecdiff/cli/render.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ecdiff/entities/entities.hpp"
#include "ecdiff/pushworld/pushworld.hpp"

namespace ecdiff::cli {

namespace {

constexpr double kCanvas = 400.0;

struct Svg {
  std::ostringstream body;

  static double px(double v) { return v * kCanvas; }
  static double py(double v) { return (1.0 - v) * kCanvas; }

  void disc(double x, double y, double r, const std::string& fill, double opacity = 1.0) {
    char buf[200];
    std::snprintf(
        buf, sizeof(buf),
        "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"%s\" fill-opacity=\"%.2f\"/>\n", px(x),
        py(y), r * kCanvas, fill.c_str(), opacity);
    body << buf;
  }
  void ring(double x, double y, double r, const std::string& stroke) {
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"none\" stroke=\"%s\" "
                  "stroke-width=\"2\" stroke-dasharray=\"4 3\"/>\n",
                  px(x), py(y), r * kCanvas, stroke.c_str());
    body << buf;
  }
  void label(const std::string& text) {
    body << "<text x=\"6\" y=\"16\" font-family=\"monospace\" font-size=\"12\">" << text
         << "</text>\n";
  }
  void write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kCanvas << "\" height=\""
        << kCanvas << "\" viewBox=\"0 0 " << kCanvas << ' ' << kCanvas << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\" stroke=\"black\"/>\n"
        << body.str() << "</svg>\n";
    if (!out) throw std::runtime_error("cannot write " + path.string());
  }
};

std::filesystem::path frame_path(const std::filesystem::path& dir, std::size_t i) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%04zu.svg", i);
  return dir / name;
}

void draw_goals(Svg& svg, const nlohmann::json& dump, double radius) {
  for (const auto& g : dump.at("goals")) {
    svg.ring(g.at("x").get<double>(), g.at("y").get<double>(), radius,
             palette_color(g.at("color").get<int>()));
  }
}

}  // namespace

std::string palette_color(int slot) {
  static const char* kColors[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#17becf"};
  if (slot >= 0 && slot < pushworld::kNumColors) return kColors[slot];
  return "#555555";
}

std::size_t render_json(const nlohmann::json& dump, const std::filesystem::path& out_dir) {
  try {
    const std::string kind = dump.at("kind").get<std::string>();
    const auto& frames = dump.at("frames");
    const double object_radius = dump.at("object_radius").get<double>();
    const double agent_radius = dump.at("agent_radius").get<double>();
    if (kind != "trajectory" && kind != "plans") {
      throw std::runtime_error("unknown dump kind '" + kind + "'");
    }
    if (!frames.empty()) std::filesystem::create_directories(out_dir);
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto& f = frames[i];
      Svg svg;
      draw_goals(svg, dump, object_radius);
      if (kind == "trajectory") {
        for (const auto& o : f.at("objects")) {
          svg.disc(o.at("x").get<double>(), o.at("y").get<double>(), object_radius,
                   palette_color(o.at("color").get<int>()));
        }
        const auto& a = f.at("agent");
        svg.disc(a.at(0).get<double>(), a.at(1).get<double>(), agent_radius, "#222222");
        svg.label("t=" + std::to_string(i));
      } else {
        for (const auto& p : f.at("particles")) {
          auto row = p.get<std::vector<double>>();
          if (row.size() != entities::kParticleDim) {
            throw std::runtime_error("particle row has " + std::to_string(row.size()) + " values");
          }
          if (row[entities::kTransparency] < 0.5) continue;
          auto feat = row.begin() + entities::kFeatures;
          int slot = static_cast<int>(std::max_element(feat, feat + entities::kFeatureDim) - feat);
          double r = std::max(0.005, 0.5 * (row[entities::kScaleX] + row[entities::kScaleY]));
          svg.disc(row[entities::kPosX], row[entities::kPosY], r,
                   slot == pushworld::kAgentColorSlot ? "#222222" : palette_color(slot), 0.7);
        }
        svg.label("step " + std::to_string(f.at("env_step").get<std::size_t>()) + " tau " +
                  std::to_string(f.at("tau").get<std::size_t>()));
      }
      svg.write(frame_path(out_dir, i));
    }
    return frames.size();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed render input: ") + e.what());
  }
}

std::size_t render_file(const std::filesystem::path& input, const std::filesystem::path& out_dir) {
  std::ifstream in(input);
  if (!in) throw std::runtime_error("cannot open " + input.string());
  nlohmann::json dump;
  try {
    dump = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(input.string() + ": " + e.what());
  }
  return render_json(dump, out_dir);
}

}  // namespace ecdiff::cli
