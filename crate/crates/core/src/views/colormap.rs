//! The built-in 256-entry colormap. Index 0 is black (no counts, dead
//! detectors); luminance rises monotonically with the index.

pub const COLORMAP: [[u8; 3]; 256] = [
    [0, 0, 0],
    [1, 0, 2],
    [1, 0, 4],
    [2, 1, 6],
    [2, 1, 8],
    [3, 1, 9],
    [4, 2, 11],
    [4, 2, 13],
    [5, 2, 15],
    [5, 2, 17],
    [6, 2, 19],
    [6, 3, 21],
    [7, 3, 22],
    [8, 3, 24],
    [8, 4, 26],
    [9, 4, 28],
    [9, 4, 30],
    [10, 4, 32],
    [10, 4, 34],
    [11, 5, 36],
    [12, 5, 38],
    [12, 5, 39],
    [13, 6, 41],
    [13, 6, 43],
    [14, 6, 45],
    [15, 6, 47],
    [15, 6, 49],
    [16, 7, 51],
    [16, 7, 52],
    [17, 7, 54],
    [18, 8, 56],
    [18, 8, 58],
    [19, 8, 60],
    [19, 8, 62],
    [20, 8, 64],
    [20, 9, 66],
    [21, 9, 68],
    [22, 9, 69],
    [22, 10, 71],
    [23, 10, 73],
    [23, 10, 75],
    [24, 10, 77],
    [24, 10, 79],
    [25, 11, 81],
    [26, 11, 82],
    [26, 11, 84],
    [27, 12, 86],
    [27, 12, 88],
    [28, 12, 90],
    [30, 12, 90],
    [32, 13, 91],
    [34, 13, 91],
    [36, 13, 91],
    [38, 13, 92],
    [39, 14, 92],
    [41, 14, 92],
    [43, 14, 92],
    [45, 15, 93],
    [47, 15, 93],
    [49, 15, 93],
    [51, 15, 94],
    [53, 16, 94],
    [55, 16, 94],
    [57, 16, 95],
    [58, 16, 95],
    [60, 17, 95],
    [62, 17, 96],
    [64, 17, 96],
    [66, 18, 96],
    [68, 18, 97],
    [70, 18, 97],
    [72, 18, 97],
    [74, 19, 98],
    [76, 19, 98],
    [78, 19, 98],
    [79, 20, 98],
    [81, 20, 99],
    [83, 20, 99],
    [85, 20, 99],
    [87, 21, 100],
    [89, 21, 100],
    [91, 21, 100],
    [93, 22, 101],
    [95, 22, 101],
    [97, 22, 101],
    [99, 22, 102],
    [100, 23, 102],
    [102, 23, 102],
    [104, 23, 102],
    [106, 24, 103],
    [108, 24, 103],
    [110, 24, 103],
    [112, 24, 104],
    [114, 25, 104],
    [116, 25, 104],
    [118, 25, 105],
    [120, 26, 105],
    [121, 26, 105],
    [123, 26, 106],
    [125, 26, 106],
    [127, 27, 106],
    [129, 27, 107],
    [131, 27, 107],
    [133, 27, 107],
    [135, 28, 108],
    [137, 28, 108],
    [139, 28, 108],
    [140, 29, 108],
    [142, 29, 109],
    [144, 29, 109],
    [146, 29, 109],
    [148, 30, 110],
    [150, 30, 110],
    [151, 31, 109],
    [153, 32, 108],
    [154, 33, 107],
    [155, 34, 106],
    [157, 35, 105],
    [158, 36, 103],
    [159, 37, 102],
    [161, 38, 101],
    [162, 38, 100],
    [163, 39, 99],
    [165, 40, 98],
    [166, 41, 97],
    [167, 42, 96],
    [169, 43, 95],
    [170, 44, 94],
    [171, 45, 92],
    [173, 46, 91],
    [174, 47, 90],
    [175, 48, 89],
    [177, 49, 88],
    [178, 50, 87],
    [179, 51, 86],
    [181, 52, 85],
    [182, 52, 84],
    [183, 53, 83],
    [185, 54, 82],
    [186, 55, 80],
    [187, 56, 79],
    [189, 57, 78],
    [190, 58, 77],
    [191, 59, 76],
    [192, 60, 75],
    [194, 61, 74],
    [195, 62, 73],
    [196, 63, 72],
    [198, 64, 71],
    [199, 65, 70],
    [200, 66, 68],
    [202, 67, 67],
    [203, 68, 66],
    [204, 68, 65],
    [206, 69, 64],
    [207, 70, 63],
    [208, 71, 62],
    [210, 72, 61],
    [211, 73, 60],
    [212, 74, 59],
    [214, 75, 58],
    [215, 76, 56],
    [216, 77, 55],
    [218, 78, 54],
    [219, 79, 53],
    [220, 80, 52],
    [222, 81, 51],
    [223, 82, 50],
    [224, 82, 49],
    [226, 83, 48],
    [227, 84, 47],
    [228, 85, 45],
    [230, 86, 44],
    [231, 87, 43],
    [232, 88, 42],
    [234, 89, 41],
    [235, 90, 40],
    [235, 92, 40],
    [236, 94, 40],
    [236, 96, 40],
    [236, 98, 40],
    [237, 100, 40],
    [237, 102, 40],
    [237, 104, 40],
    [238, 106, 40],
    [238, 108, 40],
    [239, 110, 40],
    [239, 112, 40],
    [239, 114, 40],
    [240, 116, 40],
    [240, 118, 40],
    [240, 120, 40],
    [241, 122, 40],
    [241, 124, 40],
    [241, 126, 40],
    [242, 128, 40],
    [242, 130, 40],
    [242, 132, 40],
    [243, 134, 40],
    [243, 136, 40],
    [244, 138, 40],
    [244, 139, 40],
    [244, 141, 40],
    [245, 143, 40],
    [245, 145, 40],
    [245, 147, 40],
    [246, 149, 40],
    [246, 151, 40],
    [246, 153, 40],
    [247, 155, 40],
    [247, 157, 40],
    [247, 159, 40],
    [248, 161, 40],
    [248, 163, 40],
    [248, 165, 40],
    [249, 167, 40],
    [249, 169, 40],
    [250, 171, 40],
    [250, 173, 40],
    [250, 175, 40],
    [251, 177, 40],
    [251, 179, 40],
    [251, 181, 40],
    [252, 183, 40],
    [252, 185, 40],
    [252, 187, 45],
    [252, 190, 50],
    [252, 192, 55],
    [252, 194, 61],
    [252, 196, 66],
    [253, 199, 71],
    [253, 201, 76],
    [253, 203, 81],
    [253, 205, 86],
    [253, 208, 92],
    [253, 210, 97],
    [253, 212, 102],
    [253, 214, 107],
    [253, 217, 112],
    [253, 219, 117],
    [254, 221, 123],
    [254, 223, 128],
    [254, 226, 133],
    [254, 228, 138],
    [254, 230, 143],
    [254, 232, 148],
    [254, 235, 154],
    [254, 237, 159],
    [254, 239, 164],
    [254, 241, 169],
    [255, 244, 174],
    [255, 246, 179],
    [255, 248, 185],
    [255, 250, 190],
    [255, 253, 195],
    [255, 255, 200],
];
