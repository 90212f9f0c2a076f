// Writes the procedural desk-scale corpus: content scenes, held-out scenes and
// two synthetic "artists" whose paintings share a palette and stroke style.
#include <filesystem>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fs = std::filesystem;

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

cv::Scalar jitter(std::mt19937_64& rng, cv::Scalar base, double amount) {
  return {base[0] + uniform(rng, -amount, amount), base[1] + uniform(rng, -amount, amount),
          base[2] + uniform(rng, -amount, amount)};
}

// A landscape-like scene: vertical gradient sky, ground band, a few solid objects.
cv::Mat content_scene(std::mt19937_64& rng, int size) {
  cv::Mat img(size, size, CV_8UC3);
  const cv::Scalar top = jitter(rng, {200, 150, 90}, 50);
  const cv::Scalar bottom = jitter(rng, {230, 210, 180}, 25);
  for (int y = 0; y < size; ++y) {
    const double t = static_cast<double>(y) / (size - 1);
    cv::line(img, {0, y}, {size - 1, y}, top * (1 - t) + bottom * t);
  }
  const int horizon = static_cast<int>(uniform(rng, 0.45, 0.7) * size);
  cv::rectangle(img, {0, horizon}, {size, size}, jitter(rng, {60, 120, 80}, 40), cv::FILLED);
  const int objects = 2 + static_cast<int>(rng() % 4);
  for (int i = 0; i < objects; ++i) {
    const cv::Scalar color = jitter(rng, {120, 120, 120}, 110);
    const int x = static_cast<int>(uniform(rng, 0.1, 0.9) * size);
    const int y = static_cast<int>(uniform(rng, 0.2, 0.9) * size);
    const int r = static_cast<int>(uniform(rng, 0.06, 0.18) * size);
    if (rng() % 2 == 0) {
      cv::circle(img, {x, y}, r, color, cv::FILLED, cv::LINE_AA);
    } else {
      cv::rectangle(img, {x - r, y - r}, {x + r, y + r / 2}, color, cv::FILLED, cv::LINE_AA);
    }
  }
  return img;
}

// Short curved strokes in saturated blues and yellows.
cv::Mat swirl_painting(std::mt19937_64& rng, int size) {
  cv::Mat img(size, size, CV_8UC3, jitter(rng, {120, 60, 20}, 30));
  for (int i = 0; i < 260; ++i) {
    const cv::Point c(static_cast<int>(rng() % size), static_cast<int>(rng() % size));
    const int r = 4 + static_cast<int>(rng() % 14);
    const double start = uniform(rng, 0, 360);
    const cv::Scalar color = rng() % 3 == 0 ? jitter(rng, {40, 200, 240}, 30) : jitter(rng, {170, 90, 30}, 40);
    cv::ellipse(img, c, {r, r}, 0, start, start + uniform(rng, 90, 270), color, 2, cv::LINE_AA);
  }
  return img;
}

// Soft pastel dabs over a light wash, blurred.
cv::Mat dab_painting(std::mt19937_64& rng, int size) {
  cv::Mat img(size, size, CV_8UC3, jitter(rng, {215, 205, 200}, 15));
  for (int i = 0; i < 400; ++i) {
    const cv::Point c(static_cast<int>(rng() % size), static_cast<int>(rng() % size));
    const cv::Scalar color = rng() % 2 == 0 ? jitter(rng, {200, 170, 210}, 30) : jitter(rng, {150, 200, 160}, 30);
    cv::ellipse(img, c, {3 + static_cast<int>(rng() % 5), 2 + static_cast<int>(rng() % 3)}, uniform(rng, 0, 180), 0,
                360, color, cv::FILLED, cv::LINE_AA);
  }
  cv::GaussianBlur(img, img, {5, 5}, 1.2);
  return img;
}

void write(const fs::path& path, const cv::Mat& img) {
  fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), img)) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate the procedural fixture corpus"};
  fs::path out = "fixtures/desk";
  int size = 128;
  std::uint64_t seed = 2022;
  app.add_option("--out", out, "output directory");
  app.add_option("--size", size, "image side in pixels");
  app.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  std::mt19937_64 rng(seed);
  char name[32];
  for (int i = 0; i < 8; ++i) {
    std::snprintf(name, sizeof(name), "scene_%02d.png", i);
    write(out / "content" / name, content_scene(rng, size));
  }
  for (int i = 0; i < 4; ++i) {
    std::snprintf(name, sizeof(name), "holdout_%02d.png", i);
    write(out / "holdout" / name, content_scene(rng, size));
  }
  for (int i = 0; i < 5; ++i) {
    std::snprintf(name, sizeof(name), "painting_%02d.png", i);
    write(out / "style" / "Vincent_van_Gogh" / name, swirl_painting(rng, size));
    write(out / "style" / "Claude_Monet" / name, dab_painting(rng, size));
  }
  std::cout << "wrote fixtures to " << out << "\n";
  return 0;
}
