#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mobllm::data {

// Matching vocabulary for POI category text. Listed once each, in first-seen
// order; position in this list is the category word ID.
inline const std::vector<std::string>& category_word_pool() {
  static const std::vector<std::string> pool = {
    "Airport", "Bank", "Bakery", "Beach", "Bridge", "Cafe", "Cinema", "Clinic", "College",
    "Church", "Courthouse", "Embassy", "Firestation", "Gym", "Harbor", "Hospital", "Hotel",
    "Library", "Market", "Mall", "Museum", "Office", "Park", "Pharmacy", "Pub", "Restaurant",
    "School", "Stadium", "Station", "Subway", "Supermarket", "Theater", "University", "Zoo",
    "Alley", "Aquarium", "Arch", "Art", "Bar", "Basin", "Bay", "Bench", "Bicycle", "Boat",
    "Border", "Bowling", "Brewery", "Buffet", "Bungalow", "Butcher", "Cabaret", "Cabin", "Canal",
    "Candy", "Casino", "Castle", "Cemetery", "Circus", "Cliff", "Club", "Coffeehouse", "Court",
    "Creek", "Cruise", "Dam", "Dance", "Deck", "Diner", "Dive", "Dock", "Dorm", "Drive", "Factory",
    "Farm", "Fastfood", "Ferry", "Field", "Fishing", "Fitness", "Fountain", "Gallery", "Garage",
    "Garden", "Gate", "Gazebo", "Grill", "Guesthouse", "Hike", "Hostel", "Ice", "Inn", "Island",
    "Jail", "Kiosk", "Lake", "Lane", "Lighthouse", "Mansion", "Marina", "Meadow", "Motel",
    "Monument", "Mountain", "Nursery", "Observatory", "Opera", "Orchard", "Outpost", "Palace",
    "Pantry", "Pier", "Planetarium", "Plaza", "Pool", "Post", "Promenade", "Ranch", "Recreation",
    "Refuge", "Resort", "Retreat", "Roadhouse", "Ruin", "RV", "Salon", "Sanctuary", "Sauna",
    "Shelter", "Shrine", "Silo", "Ski", "Snack", "Spa", "Speedway", "Spring", "Square", "Statue",
    "Studio", "Swim", "Tavern", "Temple", "Terminal", "Track", "Trail", "Tram", "Tunnel",
    "Vineyard", "Warehouse", "Wharf", "Wildlife", "Windmill", "Winery", "Yard", "Yoga", "Abattoir",
    "Aircraft", "Amphitheater", "Apartment", "Arena", "Auction", "Auditorium", "Avenue", "Baggage",
    "Barbecue", "Bazaar", "Boathouse", "Cafeteria", "Campsite", "Carpark", "Carwash", "Carousel",
    "Chapel", "Chemistry", "Clubhouse", "Compound", "Conservatory", "Convent", "Corner",
    "Crematorium", "Croft", "Deli", "Den", "Dockyard", "Driveway", "Enclosure", "Estate",
    "Facility", "Farmhouse", "Festival", "Fieldhouse", "Firehouse", "Florist", "Forge", "Foundry",
    "Gasworks", "Grotto", "Gymnasium", "Hall", "Hangar", "Harbormaster", "Heritage", "Homestead",
    "Hospice", "House", "Hut", "Jamboree", "Jetty", "Junction", "Laboratory", "Lagoon", "Lavatory",
    "Lodge", "Lookout", "Mill", "Mission", "Oratory", "Pavilion", "Platform", "Postbox", "Range",
    "Refinery", "Reserve", "Schoolhouse", "Shop", "Skatepark", "Slope", "Stand", "Synagogue",
    "Teahouse", "Terrace", "Tower", "Treasury", "Villa", "Waterslide", "Workshop"
  };
  return pool;
}

}  // namespace mobllm::data
