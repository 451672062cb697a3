#include "json_io.hpp"

#include "file_io.hpp"

namespace adi::detail {

json parse_json_file(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

json annotation_to_json(const image::Annotation& a) {
  json inst = json::array();
  for (const auto& i : a.instances) inst.push_back({{"start", i.start}, {"end", i.end}, {"class_id", i.class_id}});
  return {{"video_id", a.video_id}, {"num_frames", a.num_frames}, {"instances", inst}};
}

image::Annotation annotation_from_json(const json& j) {
  try {
    image::Annotation a;
    a.video_id = j.at("video_id").get<std::string>();
    a.num_frames = j.at("num_frames").get<std::size_t>();
    for (const auto& i : j.at("instances")) {
      a.instances.push_back({i.at("start").get<std::size_t>(), i.at("end").get<std::size_t>(), i.at("class_id").get<int>()});
    }
    return a;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed annotation: ") + e.what());
  }
}

}  // namespace adi::detail
