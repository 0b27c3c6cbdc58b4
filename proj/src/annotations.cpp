#include "omnia/annotations.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include <json.hpp>

#include "omnia/error.hpp"

namespace omnia {

using nlohmann::json;

namespace {

std::pair<std::size_t, std::size_t> line_and_column(std::string_view text,
                                                    std::size_t byte) {
  std::size_t line = 1;
  std::size_t column = 1;
  const std::size_t end = std::min(byte > 0 ? byte - 1 : 0, text.size());
  for (std::size_t i = 0; i < end; ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    auto [line, column] = line_and_column(text, e.byte);
    throw ParseError("malformed JSON: " + std::string(e.what()), line, column);
  }
}

[[noreturn]] void schema_error(const std::string& what) {
  throw Error(ErrorKind::Schema, what);
}

const json& field(const json& object, const char* key, const std::string& where) {
  auto it = object.find(key);
  if (it == object.end()) schema_error(where + ": missing field '" + key + "'");
  return *it;
}

Id integer_field(const json& object, const char* key, const std::string& where) {
  const json& value = field(object, key, where);
  if (!value.is_number_integer())
    schema_error(where + ": field '" + key + "' must be an integer");
  return value.get<Id>();
}

double number_field(const json& value, const std::string& where) {
  if (!value.is_number()) schema_error(where + " must be a number");
  return value.get<double>();
}

Box parse_bbox(const json& object, const std::string& where) {
  const json& bbox = field(object, "bbox", where);
  if (!bbox.is_array() || bbox.size() != 4)
    schema_error(where + ": bbox must be an array [x, y, w, h]");
  Box box{number_field(bbox[0], where + " bbox[0]"),
          number_field(bbox[1], where + " bbox[1]"),
          number_field(bbox[2], where + " bbox[2]"),
          number_field(bbox[3], where + " bbox[3]")};
  if (!box.valid()) {
    std::ostringstream os;
    os << where << ": bbox [" << box.x << "," << box.y << "," << box.w << ","
       << box.h << "] must be finite with w > 0 and h > 0";
    throw Error(ErrorKind::Geometry, os.str());
  }
  return box;
}

const json& array_field(const json& root, const char* key) {
  const json& value = field(root, key, "annotation file");
  if (!value.is_array()) schema_error(std::string("'") + key + "' must be an array");
  return value;
}

json box_json(const Box& box) { return json::array({box.x, box.y, box.w, box.h}); }

}  // namespace

std::string_view to_string(Origin origin) {
  switch (origin) {
    case Origin::GroundTruth: return "gt";
    case Origin::SafePrediction: return "safe";
    case Origin::UnsafePrediction: return "unsafe";
  }
  return "gt";
}

std::optional<Origin> origin_from_string(std::string_view text) {
  if (text == "gt") return Origin::GroundTruth;
  if (text == "safe") return Origin::SafePrediction;
  if (text == "unsafe") return Origin::UnsafePrediction;
  return std::nullopt;
}

const Image* Dataset::find_image(Id id) const {
  auto it = std::find_if(images.begin(), images.end(),
                         [id](const Image& im) { return im.id == id; });
  return it == images.end() ? nullptr : &*it;
}

const Category* Dataset::find_category(Id id) const {
  auto it = std::find_if(categories.begin(), categories.end(),
                         [id](const Category& c) { return c.id == id; });
  return it == categories.end() ? nullptr : &*it;
}

const Category* Dataset::find_category(std::string_view name) const {
  auto it = std::find_if(categories.begin(), categories.end(),
                         [name](const Category& c) { return c.name == name; });
  return it == categories.end() ? nullptr : &*it;
}

std::string canonical_name(std::string_view name) {
  auto first = name.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  auto last = name.find_last_not_of(" \t\r\n");
  std::string out(name.substr(first, last - first + 1));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

Dataset parse_dataset(std::string_view text) {
  const json root = parse_json(text);
  if (!root.is_object()) schema_error("annotation file must be a JSON object");

  Dataset d;
  for (const json& im : array_field(root, "images")) {
    Image image;
    image.id = integer_field(im, "id", "image");
    const std::string where = "image " + std::to_string(image.id);
    image.width = static_cast<int>(integer_field(im, "width", where));
    image.height = static_cast<int>(integer_field(im, "height", where));
    if (auto it = im.find("domain_tag"); it != im.end()) {
      if (!it->is_string()) schema_error(where + ": domain_tag must be a string");
      image.domain_tag = it->get<std::string>();
    }
    if (image.width <= 0 || image.height <= 0)
      throw Error(ErrorKind::Geometry, where + ": width and height must be positive");
    d.images.push_back(std::move(image));
  }

  for (const json& c : array_field(root, "categories")) {
    Category cat;
    cat.id = integer_field(c, "id", "category");
    const json& name = field(c, "name", "category " + std::to_string(cat.id));
    if (!name.is_string())
      schema_error("category " + std::to_string(cat.id) + ": name must be a string");
    cat.name = canonical_name(name.get<std::string>());
    d.categories.push_back(std::move(cat));
  }

  std::map<Id, const Image*> image_index;
  for (const Image& im : d.images) image_index.emplace(im.id, &im);
  std::set<Id> category_ids;
  for (const Category& c : d.categories) category_ids.insert(c.id);

  for (const json& a : array_field(root, "annotations")) {
    Instance inst;
    inst.id = integer_field(a, "id", "annotation");
    const std::string where = "annotation " + std::to_string(inst.id);
    inst.image_id = integer_field(a, "image_id", where);
    inst.category_id = integer_field(a, "category_id", where);

    auto found = image_index.find(inst.image_id);
    if (found == image_index.end())
      throw Error(ErrorKind::Referential,
                  where + ": unknown image_id " + std::to_string(inst.image_id));
    if (!category_ids.count(inst.category_id))
      throw Error(ErrorKind::Referential,
                  where + ": unknown category_id " + std::to_string(inst.category_id));

    const Image* image = found->second;
    inst.box = clamp_to_image(parse_bbox(a, where), image->width, image->height);
    if (!inst.box.valid())
      throw Error(ErrorKind::Geometry, where + ": bbox lies outside image " +
                                           std::to_string(image->id));

    if (auto it = a.find("provenance"); it != a.end()) {
      auto origin = it->is_string() ? origin_from_string(it->get<std::string>())
                                    : std::nullopt;
      if (!origin) schema_error(where + ": provenance must be one of gt|safe|unsafe");
      inst.provenance.origin = *origin;
    }
    if (auto it = a.find("score"); it != a.end())
      inst.provenance.score = number_field(*it, where + " score");
    d.instances.push_back(inst);
  }

  if (auto problems = validate(d); !problems.empty())
    schema_error(problems.front());
  return d;
}

std::string serialize_dataset(const Dataset& d) {
  json images = json::array();
  for (const Image& im : d.images)
    images.push_back({{"id", im.id},
                      {"width", im.width},
                      {"height", im.height},
                      {"domain_tag", im.domain_tag}});
  json categories = json::array();
  for (const Category& c : d.categories)
    categories.push_back({{"id", c.id}, {"name", c.name}});
  json annotations = json::array();
  for (const Instance& inst : d.instances) {
    json a = {{"id", inst.id},
              {"image_id", inst.image_id},
              {"category_id", inst.category_id},
              {"bbox", box_json(inst.box)},
              {"provenance", to_string(inst.provenance.origin)}};
    if (inst.provenance.score) a["score"] = *inst.provenance.score;
    annotations.push_back(std::move(a));
  }
  json root = {{"images", std::move(images)},
               {"categories", std::move(categories)},
               {"annotations", std::move(annotations)}};
  return root.dump(2) + "\n";
}

DetectionSet parse_detections(std::string_view text) {
  const json root = parse_json(text);
  if (!root.is_array()) schema_error("detection file must be a JSON array");
  DetectionSet out;
  out.reserve(root.size());
  for (std::size_t i = 0; i < root.size(); ++i) {
    const json& item = root[i];
    const std::string where = "detection " + std::to_string(i);
    if (!item.is_object()) schema_error(where + " must be an object");
    Detection det;
    det.image_id = integer_field(item, "image_id", where);
    det.category_id = integer_field(item, "category_id", where);
    det.box = parse_bbox(item, where);
    det.score = number_field(field(item, "score", where), where + " score");
    if (!(det.score > 0.0 && det.score <= 1.0))
      schema_error(where + ": score must lie in (0, 1]");
    out.push_back(det);
  }
  return out;
}

std::string serialize_detections(const DetectionSet& detections) {
  json root = json::array();
  for (const Detection& det : detections)
    root.push_back({{"image_id", det.image_id},
                    {"category_id", det.category_id},
                    {"bbox", box_json(det.box)},
                    {"score", det.score}});
  return root.dump(2) + "\n";
}

DetectionSet check_detections(const DetectionSet& detections,
                              const std::vector<Image>& images,
                              const std::vector<Category>& categories) {
  std::map<Id, const Image*> by_id;
  for (const Image& im : images) by_id[im.id] = &im;
  std::set<Id> category_ids;
  for (const Category& c : categories) category_ids.insert(c.id);

  DetectionSet out;
  out.reserve(detections.size());
  for (const Detection& det : detections) {
    auto it = by_id.find(det.image_id);
    if (it == by_id.end())
      throw Error(ErrorKind::Referential,
                  "detection references unknown image_id " + std::to_string(det.image_id));
    if (!category_ids.count(det.category_id))
      throw Error(ErrorKind::Referential, "detection references unknown category_id " +
                                              std::to_string(det.category_id));
    if (!det.box.valid() || !(det.score > 0.0 && det.score <= 1.0))
      throw Error(ErrorKind::Geometry, "invalid detection on image " +
                                           std::to_string(det.image_id));
    Detection clamped = det;
    clamped.box = clamp_to_image(det.box, it->second->width, it->second->height);
    if (!clamped.box.valid())
      throw Error(ErrorKind::Geometry, "detection lies outside image " +
                                           std::to_string(det.image_id));
    out.push_back(clamped);
  }
  return out;
}

std::vector<std::string> validate(const Dataset& d) {
  std::vector<std::string> problems;
  auto report = [&](std::string msg) { problems.push_back(std::move(msg)); };

  std::map<Id, const Image*> images;
  for (const Image& im : d.images) {
    const std::string where = "image " + std::to_string(im.id);
    if (!images.emplace(im.id, &im).second) report(where + ": duplicate id");
    if (im.width <= 0 || im.height <= 0) report(where + ": non-positive size");
  }

  std::set<Id> category_ids;
  std::set<std::string> names;
  for (const Category& c : d.categories) {
    const std::string where = "category " + std::to_string(c.id);
    if (c.id <= 0) report(where + ": id must be positive");
    if (!category_ids.insert(c.id).second) report(where + ": duplicate id");
    if (c.name.empty()) report(where + ": empty name");
    else if (c.name != canonical_name(c.name))
      report(where + ": name '" + c.name + "' is not canonical");
    if (!c.name.empty() && !names.insert(c.name).second)
      report(where + ": duplicate name '" + c.name + "'");
  }

  std::set<Id> instance_ids;
  for (const Instance& inst : d.instances) {
    const std::string where = "annotation " + std::to_string(inst.id);
    if (!instance_ids.insert(inst.id).second) report(where + ": duplicate id");
    if (!category_ids.count(inst.category_id))
      report(where + ": unknown category_id " + std::to_string(inst.category_id));
    auto im = images.find(inst.image_id);
    if (im == images.end()) {
      report(where + ": unknown image_id " + std::to_string(inst.image_id));
    } else if (inst.box.valid()) {
      const Image& image = *im->second;
      if (inst.box.x < 0 || inst.box.y < 0 || inst.box.right() > image.width ||
          inst.box.bottom() > image.height)
        report(where + ": bbox exceeds image bounds");
    }
    if (!inst.box.valid()) report(where + ": bbox must be finite with w, h > 0");

    const auto& p = inst.provenance;
    if (p.origin == Origin::GroundTruth) {
      if (p.score) report(where + ": ground truth must not carry a score");
    } else if (!p.score || !(*p.score > 0.0 && *p.score <= 1.0)) {
      report(where + ": prediction score must lie in (0, 1]");
    }
  }
  return problems;
}

std::map<Id, std::vector<const Instance*>> group_by_image(
    const std::vector<Instance>& instances) {
  std::map<Id, std::vector<const Instance*>> out;
  for (const Instance& inst : instances) out[inst.image_id].push_back(&inst);
  return out;
}

}  // namespace omnia
